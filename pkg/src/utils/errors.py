"""
Error types raised across the package.

Every error derives from LasroError so callers (the flows and the runner) can
separate expected, diagnosable failures from programming errors.
"""


class LasroError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(LasroError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidStateError(LasroError, RuntimeError):
    """An object is used before it holds the state an operation needs."""


class NoDensityError(LasroError, RuntimeError):
    """A transition is deterministic (sigma = 0) and has no density."""


class DegenerateRewardError(LasroError, RuntimeError):
    """The reward never separates samples, so no W/L pair can be mined."""


class PreconditionError(LasroError, RuntimeError):
    """A pipeline stage is missing an artifact produced by an earlier stage."""

    def __init__(self, artifact: str, message: str | None = None):
        self.artifact = artifact
        super().__init__(message or f"Missing prerequisite artifact: {artifact}")


class ConfigValidationError(LasroError, ValueError):
    """The run configuration is malformed; `path` names the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class CheckpointLoadError(LasroError, ValueError):
    """A checkpoint does not match what its manifest promises."""

    def __init__(self, path: str, expected: object, found: object):
        self.path = path
        self.expected = expected
        self.found = found
        super().__init__(f"Cannot load {path}: expected {expected}, found {found}")
