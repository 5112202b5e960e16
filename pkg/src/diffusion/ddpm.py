"""
DDPM teacher: epsilon-prediction loss, ancestral sampling and the training loop.
"""

import logging
from collections.abc import Callable

import torch

from ..utils.errors import InvalidArgumentError
from ..utils.seeding import make_generator, randint, randn
from .datasets import ToyDataset
from .schedule import NoiseSchedule, broadcast_coef, forward_diffuse

logger = logging.getLogger(__name__)

# net(x, t, c) -> epsilon prediction with the shape of x
EpsilonPredictor = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]


def ddpm_loss(
    net: EpsilonPredictor,
    x0: torch.Tensor,
    c: torch.Tensor,
    sched: NoiseSchedule,
    seed: int | torch.Generator,
) -> torch.Tensor:
    """
    Mean over the batch of ||Z - eps(x_t, t, c)||^2 with t uniform in {1..T}.

    Args:
        net: Epsilon predictor
        x0: Clean batch (n, d)
        c: Labels (n,)
        sched: Noise schedule
        seed: Seed or generator for t and Z

    Returns:
        Scalar loss, differentiable in the parameters of `net`

    Raises:
        InvalidArgumentError: empty batch
    """
    if x0.shape[0] == 0:
        raise InvalidArgumentError("ddpm_loss needs a nonempty batch")
    generator = make_generator(seed)
    n, d = x0.shape
    t = randint(sched.T + 1, n, generator, low=1)
    Z = randn(n, d, generator=generator)
    x_t = forward_diffuse(x0, t, Z, sched)
    eps = net(x_t, t, c)
    return ((Z - eps) ** 2).sum(dim=-1).mean()


def sampling_grid(T: int, steps: int) -> list[int]:
    """Strictly decreasing stride-subsampled timesteps from T down to 0 (steps + 1 entries)."""
    grid = torch.linspace(T, 0, steps + 1, dtype=torch.float64).round().long().tolist()
    return grid


def ancestral_step(
    x_t: torch.Tensor,
    eps: torch.Tensor,
    t: int,
    s: int,
    sched: NoiseSchedule,
    Z: torch.Tensor,
    sigma_scale: float = 1.0,
) -> torch.Tensor:
    """
    One reverse step t -> s (s < t) of the posterior q(x_s | x_t, x0_hat).

    With s = t - 1 this is the standard DDPM update with std sigma_t.
    """
    ab_t, ab_s = sched.ab(t), sched.ab(s)
    alpha_ts = ab_t / ab_s
    beta_ts = 1.0 - alpha_ts
    x0_hat = (x_t - torch.sqrt(1.0 - ab_t) * eps) / torch.sqrt(ab_t)
    mean = (torch.sqrt(ab_s) * beta_ts / (1.0 - ab_t)) * x0_hat + (
        torch.sqrt(alpha_ts) * (1.0 - ab_s) / (1.0 - ab_t)
    ) * x_t
    std = torch.sqrt(beta_ts * (1.0 - ab_s) / (1.0 - ab_t))
    return mean + sigma_scale * std * Z


@torch.no_grad()
def ddpm_sample(
    net: EpsilonPredictor,
    c,
    sched: NoiseSchedule,
    steps: int,
    seed: int | torch.Generator,
    n: int = 1,
    d: int | None = None,
    sigma_scale: float = 1.0,
    x_T: torch.Tensor | None = None,
) -> torch.Tensor:
    """
    Ancestral sampling from x_T ~ N(0, I) on a stride-subsampled grid.

    Args:
        net: Epsilon predictor (a DenoiserNet unless `d` is given)
        c: Condition label or LongTensor (n,)
        sched: Noise schedule
        steps: Number of reverse steps, 1 <= steps <= T
        seed: Seed or generator
        n: Number of samples when c is a single label and x_T is not given
        d: Data dimension; defaults to `net.d`
        sigma_scale: Multiplies every posterior std; 0 gives a deterministic chain
        x_T: Optional starting noise (n, d)

    Returns:
        Samples (n, d)

    Raises:
        InvalidArgumentError: steps outside [1, T]
    """
    if not 1 <= steps <= sched.T:
        raise InvalidArgumentError(f"steps must lie in [1, {sched.T}], got {steps}")
    generator = make_generator(seed)
    d = d if d is not None else net.d
    if x_T is not None:
        n = x_T.shape[0]
    c = torch.as_tensor(c, dtype=torch.long)
    if c.dim() == 0:
        c = c.expand(n)
    elif x_T is None:
        n = c.shape[0]

    x = randn(n, d, generator=generator) if x_T is None else x_T.clone()
    grid = sampling_grid(sched.T, steps)
    for t, s in zip(grid[:-1], grid[1:], strict=True):
        eps = net(x, torch.full((n,), t, dtype=torch.long), c)
        Z = randn(n, d, generator=generator)
        x = ancestral_step(x, eps, t, s, sched, Z, sigma_scale=sigma_scale)
    return x


def x0_from_eps(x_t: torch.Tensor, eps: torch.Tensor, t, sched: NoiseSchedule) -> torch.Tensor:
    """Clean-point estimate implied by an epsilon prediction at timestep(s) t."""
    ab = broadcast_coef(sched.ab(t), x_t)
    return (x_t - torch.sqrt(1.0 - ab) * eps) / torch.sqrt(ab)


def train_teacher(
    net: torch.nn.Module,
    dataset: ToyDataset,
    sched: NoiseSchedule,
    iters: int,
    batch_size: int,
    lr: float,
    seed: int | torch.Generator,
    on_step: Callable[[int, float], None] | None = None,
) -> list[float]:
    """
    Fit the teacher with Adam on fresh dataset draws.

    Args:
        net: DenoiserNet to train in place
        dataset: Toy dataset
        sched: Noise schedule
        iters: Optimizer steps
        batch_size: Points per step
        lr: Adam learning rate
        seed: Seed or generator
        on_step: Optional callback (step, loss)

    Returns:
        Loss trace
    """
    generator = make_generator(seed)
    optimizer = torch.optim.Adam(net.parameters(), lr=lr)
    losses = []
    net.train()
    for step in range(iters):
        x0, c = dataset.sample_labeled(batch_size, generator)
        loss = ddpm_loss(net, x0, c, sched, generator)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
        if on_step is not None:
            on_step(step, losses[-1])
        if step % 500 == 0:
            logger.info(f"Teacher step {step}/{iters}: loss={losses[-1]:.4f}")
    net.eval()
    return losses
