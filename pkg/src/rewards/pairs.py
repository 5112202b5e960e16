"""Winner/loser pair mining within a group of sampler outputs."""

from collections.abc import Sequence
from dataclasses import dataclass

import torch

from ..utils.errors import InvalidArgumentError
from .signals import RewardSignal


@dataclass(frozen=True)
class WLPair:
    """Best and worst member of a group, ranked by the black-box reward."""

    z_w: torch.Tensor
    z_l: torch.Tensor
    c: int
    r_w: float
    r_l: float
    step_index: int

    def __post_init__(self):
        if not self.r_w > self.r_l:
            raise InvalidArgumentError(f"Winner reward {self.r_w} must exceed loser reward {self.r_l}")
        if self.step_index not in (1, 2):
            raise InvalidArgumentError(f"step_index must be 1 or 2, got {self.step_index}")
        if self.z_w.shape != self.z_l.shape:
            raise InvalidArgumentError("Winner and loser shapes differ")


def winner_loser_indices(rewards: Sequence[float] | torch.Tensor) -> tuple[int, int] | None:
    """
    (argmax, argmin) with lowest-index tie-breaks; None when all rewards are equal.

    Raises:
        InvalidArgumentError: fewer than two rewards
    """
    values = rewards.tolist() if isinstance(rewards, torch.Tensor) else list(rewards)
    if len(values) < 2:
        raise InvalidArgumentError(f"Pair mining needs >= 2 samples, got {len(values)}")
    best = max(range(len(values)), key=values.__getitem__)
    worst = min(range(len(values)), key=values.__getitem__)
    if values[best] == values[worst]:
        return None
    return best, worst


def select_wl_pair(
    samples: torch.Tensor | Sequence[torch.Tensor],
    c: int,
    r: RewardSignal,
    step_index: int = 1,
    rewards: torch.Tensor | None = None,
) -> WLPair | None:
    """
    Mine the W/L pair of a group.

    Args:
        samples: Group of points (n, d), n >= 2
        c: Shared condition
        r: Black-box reward
        step_index: Sampler step that produced the group (1 or 2)
        rewards: Precomputed rewards of `samples`; evaluated here when omitted

    Returns:
        WLPair, or None when the reward does not separate the group
    """
    if not isinstance(samples, torch.Tensor):
        samples = torch.stack(list(samples))
    if samples.shape[0] < 2:
        raise InvalidArgumentError(f"Pair mining needs >= 2 samples, got {samples.shape[0]}")
    samples = samples.detach()
    if rewards is None:
        rewards = r.evaluate(samples, c)
    indices = winner_loser_indices(rewards)
    if indices is None:
        return None
    w, l = indices
    return WLPair(
        z_w=samples[w],
        z_l=samples[l],
        c=int(c),
        r_w=float(rewards[w]),
        r_l=float(rewards[l]),
        step_index=step_index,
    )


def best_index(rewards: Sequence[float] | torch.Tensor) -> int:
    """Index of the highest reward, lowest index on ties."""
    values = rewards.tolist() if isinstance(rewards, torch.Tensor) else list(rewards)
    if not values:
        raise InvalidArgumentError("best_index needs at least one reward")
    return max(range(len(values)), key=values.__getitem__)
