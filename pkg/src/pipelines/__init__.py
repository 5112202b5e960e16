"""
Pipeline stages: one function per subcommand, working in a seed directory.
"""

from .lasro_stages import ANALYZE_PROBES, STAGES, StageContext, run_stage

__all__ = [
    "ANALYZE_PROBES",
    "STAGES",
    "StageContext",
    "run_stage",
]
