"""
Consistency distillation of the DDPM teacher into the student.

The teacher supplies one deterministic (eta = 0) solver step of size k; the
student at (x_t, t) is pulled toward a stop-gradient target network at
(x_hat_{t-k}, t - k).
"""

import copy
import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass

import torch
from torch import nn

from ..diffusion.datasets import ToyDataset
from ..diffusion.ddpm import x0_from_eps
from ..diffusion.networks import DenoiserNet
from ..diffusion.schedule import NoiseSchedule, broadcast_coef, forward_diffuse
from ..utils.errors import InvalidArgumentError
from ..utils.seeding import make_generator, randint, randn
from .model import BoundaryCoefficients, ConsistencyModel

logger = logging.getLogger(__name__)


def teacher_step(
    teacher: DenoiserNet,
    x_t: torch.Tensor,
    t,
    k: int,
    c,
    sched: NoiseSchedule,
) -> torch.Tensor:
    """
    Deterministic DDIM update from t to t - k with the teacher's epsilon.

    Raises:
        InvalidArgumentError: t - k < 0
    """
    t = torch.as_tensor(t)
    if bool((t - k < 0).any()):
        raise InvalidArgumentError(f"teacher_step needs t - k >= 0 (t={t.tolist()}, k={k})")
    if k == 0:
        return x_t
    eps = teacher(x_t, t, c)
    x0 = x0_from_eps(x_t, eps, t, sched)
    ab_s = broadcast_coef(sched.ab(t - k), x_t)
    return torch.sqrt(ab_s) * x0 + torch.sqrt(1.0 - ab_s) * eps


Solver = Callable[[DenoiserNet, torch.Tensor, torch.Tensor, int, torch.Tensor, NoiseSchedule], torch.Tensor]


def draw_grid_timesteps(sched: NoiseSchedule, k: int, n: int, generator: torch.Generator) -> torch.Tensor:
    """Uniform draws from the skip grid {k, 2k, ..., floor(T / k) k}."""
    if k < 1 or k > sched.T:
        raise InvalidArgumentError(f"skip must lie in [1, {sched.T}], got {k}")
    return randint(sched.T // k + 1, n, generator, low=1) * k


def distill_loss(
    student: ConsistencyModel,
    target: ConsistencyModel,
    teacher: DenoiserNet,
    x0: torch.Tensor,
    c: torch.Tensor,
    sched: NoiseSchedule,
    k: int,
    seed: int | torch.Generator,
    solver: Solver = teacher_step,
) -> torch.Tensor:
    """
    Mean squared L2 between f_student(x_t, t) and f_target(x_hat_{t-k}, t - k).

    Only the student branch is differentiated; teacher and target run under
    no_grad.

    Args:
        student: Consistency model being trained
        target: Stop-gradient copy (EMA of the student)
        teacher: Frozen epsilon predictor
        x0: Clean batch (n, d)
        c: Labels (n,)
        sched: Noise schedule
        k: Skip, >= 1
        seed: Seed or generator for t and the forward noise
        solver: Teacher update; teacher_step unless overridden

    Raises:
        InvalidArgumentError: empty batch or k < 1
    """
    if x0.shape[0] == 0:
        raise InvalidArgumentError("distill_loss needs a nonempty batch")
    if k < 1:
        raise InvalidArgumentError(f"skip must be >= 1, got {k}")
    generator = make_generator(seed)
    n, d = x0.shape
    t = draw_grid_timesteps(sched, k, n, generator)
    x_t = forward_diffuse(x0, t, randn(n, d, generator=generator), sched)

    with torch.no_grad():
        x_prev = solver(teacher, x_t, t, k, c, sched)
        target_out = target(x_prev, t - k, c)

    student_out = student(x_t, t, c)
    return ((student_out - target_out) ** 2).sum(dim=-1).mean()


def ema_update(
    params: Iterable[torch.Tensor] | nn.Module,
    ema_params: Iterable[torch.Tensor] | nn.Module,
    mu: float,
) -> list[torch.Tensor]:
    """
    In-place ema <- mu * ema + (1 - mu) * params, elementwise.

    Returns:
        The updated EMA tensors

    Raises:
        InvalidArgumentError: mu outside [0, 1] or mismatched shapes
    """
    if not 0.0 <= mu <= 1.0:
        raise InvalidArgumentError(f"mu must lie in [0, 1], got {mu}")
    if isinstance(params, nn.Module):
        params = params.parameters()
    if isinstance(ema_params, nn.Module):
        ema_params = ema_params.parameters()
    params, ema_params = list(params), list(ema_params)
    if len(params) != len(ema_params) or any(
        p.shape != e.shape for p, e in zip(params, ema_params, strict=False)
    ):
        raise InvalidArgumentError("EMA parameters do not match the model parameters")

    with torch.no_grad():
        for p, e in zip(params, ema_params, strict=True):
            e.mul_(mu).add_(p.detach(), alpha=1.0 - mu)
    return ema_params


def frozen_copy(model: nn.Module) -> nn.Module:
    """Deep copy with gradients disabled (EMA and target networks)."""
    clone = copy.deepcopy(model)
    clone.requires_grad_(False)
    clone.eval()
    return clone


@dataclass
class DistillRegularizer:
    """
    Offline distillation loss used as the regularizer during fine-tuning.

    Holds the frozen teacher, the target network and the offline data source.
    """

    teacher: DenoiserNet
    target: ConsistencyModel
    dataset: ToyDataset
    sched: NoiseSchedule
    skip: int
    batch_size: int
    target_mu: float = 0.95

    def batch(self, generator: torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
        return self.dataset.sample_labeled(self.batch_size, generator)

    def loss(self, student: ConsistencyModel, seed: int | torch.Generator) -> torch.Tensor:
        generator = make_generator(seed)
        x0, c = self.batch(generator)
        return distill_loss(student, self.target, self.teacher, x0, c, self.sched, self.skip, generator)

    def loss_on(
        self, student: ConsistencyModel, x0: torch.Tensor, c: torch.Tensor, seed: int | torch.Generator
    ) -> torch.Tensor:
        """Distillation loss on caller-provided points (online GORS data)."""
        return distill_loss(student, self.target, self.teacher, x0, c, self.sched, self.skip, seed)

    def update_target(self, student: ConsistencyModel) -> None:
        ema_update(student, self.target, self.target_mu)


def build_student(teacher: DenoiserNet, sched: NoiseSchedule, sigma_data: float, timestep_scaling: float) -> ConsistencyModel:
    """Student initialized from a copy of the teacher trunk."""
    trunk = copy.deepcopy(teacher)
    trunk.requires_grad_(True)
    return ConsistencyModel(trunk, sched, BoundaryCoefficients(sigma_data, timestep_scaling))


def distill_student(
    student: ConsistencyModel,
    regularizer: DistillRegularizer,
    iters: int,
    lr: float,
    seed: int | torch.Generator,
    on_step: Callable[[int, float], None] | None = None,
) -> list[float]:
    """
    Run consistency distillation, updating the target network by EMA.

    Returns:
        Loss trace
    """
    generator = make_generator(seed)
    optimizer = torch.optim.Adam(student.parameters(), lr=lr)
    losses = []
    for step in range(iters):
        loss = regularizer.loss(student, generator)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        regularizer.update_target(student)
        losses.append(loss.item())
        if on_step is not None:
            on_step(step, losses[-1])
        if step % 500 == 0:
            logger.info(f"Distill step {step}/{iters}: loss={losses[-1]:.4f}")
    return losses
