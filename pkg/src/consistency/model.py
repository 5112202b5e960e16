"""
Consistency student f(x, t, c) = c_skip(t) x + c_out(t) F(x, t, c).

F is the clean-point estimate implied by an epsilon-predicting trunk, so a
student built from a copy of the teacher trunk starts as the teacher's
one-step denoiser. The boundary coefficients give f(x, 0, c) = x exactly.
"""

from collections.abc import Callable
from dataclasses import dataclass

import torch
from torch import nn

from ..diffusion.networks import DenoiserNet
from ..diffusion.schedule import NoiseSchedule, broadcast_coef
from ..utils.errors import InvalidArgumentError


@dataclass(frozen=True)
class BoundaryCoefficients:
    """c_skip(t) = sd^2 / ((s t)^2 + sd^2), c_out(t) = s t / sqrt((s t)^2 + sd^2)."""

    sigma_data: float = 0.5
    timestep_scaling: float = 10.0

    def __call__(self, t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        scaled = self.timestep_scaling * t
        denom = scaled**2 + self.sigma_data**2
        return self.sigma_data**2 / denom, scaled / torch.sqrt(denom)


Coefficients = Callable[[torch.Tensor], tuple[torch.Tensor, torch.Tensor]]


class ConsistencyModel(nn.Module):
    """Student sampler wrapping a DenoiserNet-shaped trunk."""

    def __init__(
        self,
        trunk: DenoiserNet,
        sched: NoiseSchedule,
        coefficients: Coefficients | None = None,
    ):
        super().__init__()
        self.trunk = trunk
        self.sched = sched
        self.coefficients = coefficients or BoundaryCoefficients()

    @property
    def d(self) -> int:
        return self.trunk.d

    @property
    def C(self) -> int:
        return self.trunk.C

    def _timesteps(self, x: torch.Tensor, t) -> torch.Tensor:
        t = torch.as_tensor(t, device=x.device)
        self.sched.check_timestep(t if t.dim() else int(t))
        return t.long()

    def denoise(self, x: torch.Tensor, t, c) -> torch.Tensor:
        """F(x, t, c): clean-point estimate from the trunk's epsilon prediction."""
        t = self._timesteps(x, t)
        ab = broadcast_coef(self.sched.ab(t), x)
        eps = self.trunk(x, t, c)
        return (x - torch.sqrt(1.0 - ab) * eps) / torch.sqrt(ab)

    def forward(self, x: torch.Tensor, t, c) -> torch.Tensor:
        t = self._timesteps(x, t)
        c_skip, c_out = self.coefficients(t.to(x.dtype))
        c_skip, c_out = broadcast_coef(c_skip, x), broadcast_coef(c_out, x)
        return c_skip * x + c_out * self.denoise(x, t, c)


def cm_apply(f: ConsistencyModel, x: torch.Tensor, t, c) -> torch.Tensor:
    """
    Evaluate the student at (x, t, c).

    Raises:
        InvalidArgumentError: t outside [0, T]
    """
    if not isinstance(f, ConsistencyModel):
        raise InvalidArgumentError(f"Expected a ConsistencyModel, got {type(f).__name__}")
    return f(x, t, c)
