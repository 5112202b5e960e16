"""Utility modules shared by every stage: errors, seeding, metrics, checkpoints and run state."""

from .errors import (
    CheckpointLoadError,
    ConfigValidationError,
    DegenerateRewardError,
    InvalidArgumentError,
    InvalidStateError,
    LasroError,
    NoDensityError,
    PreconditionError,
)

__all__ = [
    "CheckpointLoadError",
    "ConfigValidationError",
    "DegenerateRewardError",
    "InvalidArgumentError",
    "InvalidStateError",
    "LasroError",
    "NoDensityError",
    "PreconditionError",
]
