"""
DDPO-style policy gradient on the multistep sampler viewed as an MDP.

Only transitions with a Gaussian density contribute log-probabilities. At
H = 2 the second transition is deterministic, so the usable estimator only
credits the first transition (degenerate form); asking for the full form
surfaces the NoDensityError.
"""

import math

import torch

from ..consistency.model import ConsistencyModel
from ..consistency.sampling import SamplerTrace, Transition, cm_sample
from ..rewards.signals import RewardSignal
from ..training.finetune import offline_term
from ..utils.errors import InvalidArgumentError
from .context import UpdateContext


def gaussian_logprob(f: ConsistencyModel, tr: Transition) -> torch.Tensor:
    """
    log N(x_to | sqrt(ab[t_to]) f(x_from, t_from, c), sigma^2 I), per chain.

    Raises:
        NoDensityError: sigma = 0
    """
    tr.require_density()
    ab_to = f.sched.ab(tr.t_to)
    mean = torch.sqrt(ab_to) * f(tr.x_from, tr.t_from, tr.c)
    d = tr.x_to.shape[-1]
    var = tr.sigma**2
    sq = ((tr.x_to - mean) ** 2).sum(dim=-1)
    return -0.5 * sq / var - 0.5 * d * math.log(2 * math.pi * var)


def reinforce_loss(
    f: ConsistencyModel,
    trace: SamplerTrace,
    rewards: torch.Tensor,
    degenerate: bool = True,
    use_baseline: bool = True,
) -> torch.Tensor:
    """
    Surrogate objective whose gradient is the REINFORCE estimator.

    Args:
        f: Student
        trace: Trace sampled without gradients
        rewards: Final-output rewards (n,)
        degenerate: Use only transitions that have a density
        use_baseline: Subtract the batch-mean reward

    Raises:
        NoDensityError: degenerate=False (the final transition is deterministic)
    """
    transitions = trace.transitions()
    if degenerate:
        transitions = [tr for tr in transitions if tr.has_density]
        if not transitions:
            raise InvalidArgumentError(f"An H={trace.H} sampler has no transition with a density")
    logprob = sum(gaussian_logprob(f, tr) for tr in transitions)
    advantages = rewards - rewards.mean() if use_baseline else rewards
    return -(advantages.detach() * logprob).mean()


def ddpo_update(
    f: ConsistencyModel,
    r: RewardSignal,
    ctx: UpdateContext,
    c: int,
    degenerate: bool = True,
    H: int = 2,
) -> dict:
    """One policy-gradient update plus the offline regularizer."""
    n = ctx.cfg.train.N_s
    trace = cm_sample(f, c, H, ctx.generator, n=n, mid_timestep=ctx.cfg.distill.mid_timestep)
    rewards1 = r.evaluate(trace.outputs[0], c)
    rewards = r.evaluate(trace.final, c)
    ctx.budget.chains += n
    ctx.budget.reward_evals += 2 * n

    pg = reinforce_loss(f, trace, rewards, degenerate=degenerate)
    lcm = offline_term(f, ctx.cfg.train, ctx.regularizer, ctx.generator)
    total = pg + ctx.cfg.train.c * lcm
    ctx.step(total)
    return {
        "reward_mean_1step": rewards1.mean().item(),
        "reward_mean_2step": rewards.mean().item(),
        "loss_pg": pg.item(),
        "loss_lcm": lcm.item(),
        "loss_total": total.item(),
    }
