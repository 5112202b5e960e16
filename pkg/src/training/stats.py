"""
Running statistics behind the normalization/clipping map S, and the
per-method sample budget counters.
"""

import math
from collections import deque
from dataclasses import asdict, dataclass, field

import torch

from ..utils.errors import InvalidArgumentError, InvalidStateError


@dataclass
class RunningStats:
    """
    Exponentially weighted mean of raw scores plus a sliding window of
    residuals (score - prior mean) whose nearest-rank 90th percentile
    scales the normalized score.
    """

    decay: float = 0.99
    window_size: int = 1024
    floor: float = 1e-6
    mean: float | None = None
    count: int = 0
    window: deque = field(default_factory=deque)

    def __post_init__(self):
        self.window = deque(self.window, maxlen=self.window_size)

    @property
    def initialized(self) -> bool:
        return self.mean is not None

    @property
    def p90(self) -> float:
        """Nearest-rank 90th percentile of the residual window, floored."""
        if not self.window:
            return self.floor
        ordered = sorted(self.window)
        rank = math.ceil(0.9 * len(ordered))
        return max(ordered[rank - 1], self.floor)


def update_stats(stats: RunningStats, value: float) -> RunningStats:
    """
    Push one raw score; the first observation sets the mean with residual 0.

    Raises:
        InvalidArgumentError: non-finite value
    """
    value = float(value)
    if not math.isfinite(value):
        raise InvalidArgumentError(f"update_stats got a non-finite value: {value}")
    if stats.mean is None:
        residual = 0.0
        stats.mean = value
    else:
        residual = value - stats.mean
        stats.mean = stats.decay * stats.mean + (1.0 - stats.decay) * value
    stats.window.append(residual)
    stats.count += 1
    return stats


def normalize_clip(stats: RunningStats, value: float | torch.Tensor) -> float | torch.Tensor:
    """
    S(value) = min(1, (value - mean) / max(p90, floor)), unbounded below.

    Tensors keep their graph; the statistics enter as constants.

    Raises:
        InvalidStateError: no observation pushed yet
    """
    if not stats.initialized:
        raise InvalidStateError("normalize_clip needs at least one observation in the stats")
    scale = max(stats.p90, stats.floor)
    normalized = (value - stats.mean) / scale
    if isinstance(normalized, torch.Tensor):
        return torch.clamp(normalized, max=1.0)
    return min(1.0, normalized)


@dataclass
class SampleBudget:
    """Counts what a fine-tuning method consumed, for matched-budget comparisons."""

    chains: int = 0
    reward_evals: int = 0
    theta_updates: int = 0
    psi_updates: int = 0

    def as_metrics(self) -> dict[str, int]:
        return {f"budget_{name}": value for name, value in asdict(self).items()}
