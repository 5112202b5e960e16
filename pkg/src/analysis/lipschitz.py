"""
Local Lipschitz probe of the second sampler step.

For noise level t: z1^t is the one-step output forward-noised to t, its
neighbor is sqrt(1 - eps^2) z1^t + eps z', and the estimate is the mean of
|q(f(z1^t)) - q(f(neighbor))| / ||z1^t - neighbor|| over N draws.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import pandas as pd
import torch
from scipy.stats import spearmanr

from ..consistency.model import ConsistencyModel
from ..diffusion.datasets import ToyDataset
from ..diffusion.schedule import forward_diffuse
from ..rewards.signals import RewardSignal
from ..utils.errors import InvalidArgumentError
from ..utils.seeding import make_generator, randn

logger = logging.getLogger(__name__)

# quality(z, c) -> (n,)
Quality = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


@dataclass
class LipschitzReport:
    t_levels: list[int]
    estimates: list[float]
    N: int
    epsilon: float
    skipped: list[int] = field(default_factory=list)
    quality: str = ""

    @property
    def spearman(self) -> float:
        """Rank correlation between noise level and estimate."""
        if len(self.t_levels) < 2:
            return float("nan")
        return float(spearmanr(self.t_levels, self.estimates).statistic)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "quality": self.quality,
                "t": self.t_levels,
                "estimate": self.estimates,
                "N": self.N,
                "epsilon": self.epsilon,
                "skipped": self.skipped,
            }
        )


def perturb_neighbor(z: torch.Tensor, epsilon: float, seed: int | torch.Generator) -> torch.Tensor:
    """
    sqrt(1 - eps^2) z + eps z' with z' ~ N(0, I).

    Raises:
        InvalidArgumentError: epsilon outside (0, 1)
    """
    if not 0 < epsilon < 1:
        raise InvalidArgumentError(f"epsilon must lie in (0, 1), got {epsilon}")
    generator = make_generator(seed)
    return (1.0 - epsilon**2) ** 0.5 * z + epsilon * randn(*z.shape, generator=generator)


def density_quality(dataset: ToyDataset) -> Quality:
    """Prompt-free quality: negative mixture log-density."""

    def quality(z: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        return -dataset.log_density(z)

    return quality


def reward_quality(r: RewardSignal) -> Quality:
    return r.evaluate


@torch.no_grad()
def local_lipschitz(
    f: ConsistencyModel,
    quality: Quality,
    t_levels: Sequence[int],
    epsilon: float,
    N: int,
    conditions: Sequence[int],
    seed: int | torch.Generator,
    name: str = "",
) -> LipschitzReport:
    """
    Estimate the local Lipschitz constant of z1^t -> q(f(z1^t, t, c)) per level.

    Draws with a zero denominator are skipped and counted.

    Raises:
        InvalidArgumentError: N < 100, empty conditions or a level outside [1, T]
    """
    if N < 100:
        raise InvalidArgumentError(f"N must be >= 100, got {N}")
    if not conditions:
        raise InvalidArgumentError("local_lipschitz needs at least one condition")
    for t in t_levels:
        f.sched.check_timestep(t, low=1)

    generator = make_generator(seed)
    c = torch.as_tensor([conditions[i % len(conditions)] for i in range(N)], dtype=torch.long)
    estimates, skipped = [], []
    for t in t_levels:
        x_T = randn(N, f.d, generator=generator)
        z0 = f(x_T, f.sched.T, c)
        z1 = forward_diffuse(z0, t, randn(N, f.d, generator=generator), f.sched)
        z1_eps = perturb_neighbor(z1, epsilon, generator)
        q = quality(f(z1, t, c), c)
        q_eps = quality(f(z1_eps, t, c), c)
        dist = torch.linalg.vector_norm(z1 - z1_eps, dim=-1)
        valid = dist > 0
        n_skipped = int((~valid).sum())
        if n_skipped:
            logger.warning(f"Skipped {n_skipped} draws with identical perturbations at t={t}")
        ratio = (q - q_eps).abs()[valid] / dist[valid]
        estimates.append(float(ratio.mean()) if ratio.numel() else float("nan"))
        skipped.append(n_skipped)

    report = LipschitzReport(list(t_levels), estimates, N, epsilon, skipped, quality=name)
    logger.info(f"Local Lipschitz ({name}): {dict(zip(report.t_levels, estimates, strict=True))}")
    return report
