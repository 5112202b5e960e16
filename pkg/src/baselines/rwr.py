"""Reward-weighted regression: weighted denoising regression toward sampled outputs."""

import math

import torch

from ..consistency.model import ConsistencyModel
from ..consistency.sampling import cm_sample
from ..diffusion.schedule import broadcast_coef, forward_diffuse
from ..rewards.signals import RewardSignal
from ..training.finetune import offline_term
from ..utils.errors import InvalidArgumentError
from ..utils.seeding import randint, randn
from .context import UpdateContext


def rwr_weights(rewards: torch.Tensor, temperature: float) -> torch.Tensor:
    """softmax(rewards / temperature); uniform for an infinite temperature."""
    if temperature <= 0:
        raise InvalidArgumentError(f"temperature must be > 0, got {temperature}")
    if math.isinf(temperature):
        return torch.full_like(rewards, 1.0 / rewards.shape[0])
    return torch.softmax(rewards / temperature, dim=0)


def weighted_regression_loss(
    f: ConsistencyModel,
    targets: torch.Tensor,
    c: torch.Tensor,
    weights: torch.Tensor,
    generator: torch.Generator,
) -> torch.Tensor:
    """
    sum_i w_i ||Z_i - eps_hat_i||^2 with eps_hat recovered from the student's
    clean estimate at a uniformly drawn t.
    """
    sched = f.sched
    n, d = targets.shape
    t = randint(sched.T + 1, n, generator, low=1)
    Z = randn(n, d, generator=generator)
    x_t = forward_diffuse(targets, t, Z, sched)
    ab = broadcast_coef(sched.ab(t), x_t)
    eps_hat = (x_t - torch.sqrt(ab) * f(x_t, t, c)) / torch.sqrt(1.0 - ab)
    return (weights.detach() * ((Z - eps_hat) ** 2).sum(dim=-1)).sum()


def rwr_update(f: ConsistencyModel, r: RewardSignal, ctx: UpdateContext, c: int) -> dict:
    tcfg = ctx.cfg.train
    n = tcfg.N_s
    trace = cm_sample(f, c, 2, ctx.generator, n=n, mid_timestep=ctx.cfg.distill.mid_timestep)
    rewards1 = r.evaluate(trace.z1, c)
    rewards = r.evaluate(trace.z2, c)
    ctx.budget.chains += n
    ctx.budget.reward_evals += 2 * n

    weights = rwr_weights(rewards, tcfg.rwr_temperature)
    regression = weighted_regression_loss(f, trace.z2.detach(), trace.c, weights, ctx.generator)
    lcm = offline_term(f, tcfg, ctx.regularizer, ctx.generator)
    total = regression + tcfg.c * lcm
    ctx.step(total)
    return {
        "reward_mean_1step": rewards1.mean().item(),
        "reward_mean_2step": rewards.mean().item(),
        "loss_rwr": regression.item(),
        "loss_lcm": lcm.item(),
        "loss_total": total.item(),
        "weight_max": weights.max().item(),
    }
