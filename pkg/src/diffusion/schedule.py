"""
Discrete-time noise schedules and forward noising.

Timesteps are 1-indexed as in the DDPM formulation: beta[t - 1] is beta_t,
alpha_bar[t] is the cumulative product up to t with alpha_bar[0] = 1.
"""

import logging
from dataclasses import dataclass

import torch

from ..cfg.config import DTYPE
from ..utils.errors import InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep diffusion coefficients for T discrete steps."""

    T: int
    beta: torch.Tensor
    alpha_bar: torch.Tensor
    sigma: torch.Tensor

    def ab(self, t: int | torch.Tensor) -> torch.Tensor:
        """alpha_bar at integer timestep(s) t in [0, T]."""
        return self.alpha_bar[t] if isinstance(t, torch.Tensor) else self.alpha_bar[int(t)]

    def sigma_at(self, t: int | torch.Tensor) -> torch.Tensor:
        """Posterior std sigma_t for t in [1, T]."""
        return self.sigma[t - 1]

    def check_timestep(self, t: int | torch.Tensor, low: int = 0) -> None:
        """Raise InvalidArgumentError unless every t lies in [low, T]."""
        if isinstance(t, torch.Tensor):
            bad = bool(((t < low) | (t > self.T)).any())
        else:
            bad = not low <= int(t) <= self.T
        if bad:
            raise InvalidArgumentError(f"timestep {t} outside [{low}, {self.T}]")


def make_schedule(
    T: int, kind: str = "linear", beta_min: float = 1e-3, beta_max: float = 0.2
) -> NoiseSchedule:
    """
    Build a noise schedule.

    Args:
        T: Number of diffusion steps (>= 1)
        kind: Schedule family; only "linear" is supported
        beta_min: First beta, in (0, 1)
        beta_max: Last beta, in [beta_min, 1)

    Returns:
        NoiseSchedule with strictly decreasing alpha_bar

    Raises:
        InvalidArgumentError: T < 1, unknown kind or out-of-range betas
    """
    if T < 1:
        raise InvalidArgumentError(f"T must be >= 1, got {T}")
    if kind != "linear":
        raise InvalidArgumentError(f"Unknown schedule kind: {kind}")
    if not 0 < beta_min <= beta_max < 1:
        raise InvalidArgumentError(
            f"Betas must satisfy 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}"
        )

    beta = torch.linspace(beta_min, beta_max, T, dtype=DTYPE)
    alpha_bar = torch.cat([torch.ones(1, dtype=DTYPE), torch.cumprod(1.0 - beta, dim=0)])

    # sigma_t^2 = beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t)
    sigma = torch.sqrt(beta * (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]))

    logger.debug(f"Built {kind} schedule: T={T}, alpha_bar[T]={alpha_bar[-1].item():.3e}")
    return NoiseSchedule(T=T, beta=beta, alpha_bar=alpha_bar, sigma=sigma)


def broadcast_coef(values: torch.Tensor, like: torch.Tensor) -> torch.Tensor:
    """Reshape per-item coefficients (n,) or scalars to broadcast over `like` (n, d)."""
    if values.dim() == 0:
        return values
    return values.reshape(-1, *([1] * (like.dim() - 1)))


def forward_diffuse(
    x0: torch.Tensor, t: int | torch.Tensor, Z: torch.Tensor, sched: NoiseSchedule
) -> torch.Tensor:
    """
    Noise clean points to timestep t: sqrt(ab_t) x0 + sqrt(1 - ab_t) Z.

    Args:
        x0: Clean points (n, d) or (d,)
        t: Integer timestep or per-item LongTensor (n,)
        Z: Standard normal noise, same shape as x0
        sched: Noise schedule

    Raises:
        InvalidArgumentError: shape mismatch or t outside [0, T]
    """
    if x0.shape != Z.shape:
        raise InvalidArgumentError(f"x0 shape {tuple(x0.shape)} != noise shape {tuple(Z.shape)}")
    sched.check_timestep(t)
    ab = broadcast_coef(sched.ab(t), x0)
    return torch.sqrt(ab) * x0 + torch.sqrt(1.0 - ab) * Z
