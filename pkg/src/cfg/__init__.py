"""
Configuration package for desk-scale LaSRO runs.

This package holds the default constants and the validated run configuration.
"""

from .config import (
    DTYPE,
    SCHEMA_VERSION,
    RunConfig,
    TrainConfig,
    apply_overrides,
    config_hash,
    emit_config,
    make_run_id,
    parse_config,
    validate_config,
)

__all__ = [
    "DTYPE",
    "SCHEMA_VERSION",
    "RunConfig",
    "TrainConfig",
    "apply_overrides",
    "config_hash",
    "emit_config",
    "make_run_id",
    "parse_config",
    "validate_config",
]
