"""
Prefect orchestration flows for the LaSRO subcommands.
"""

from .lasro_flows import FLOWS, run

__all__ = [
    "FLOWS",
    "run",
]
