"""Ground-truth-gradient ablation: the LaSRO student step with the true reward."""

import torch

from ..consistency.model import ConsistencyModel
from ..consistency.sampling import cm_sample
from ..rewards.signals import RewardSignal
from ..training.finetune import LossTerms, compose_loss, offline_term
from ..training.stats import normalize_clip, update_stats
from ..utils.errors import InvalidArgumentError
from ..utils.seeding import randint
from .context import UpdateContext


def direct_loss(
    f: ConsistencyModel,
    r: RewardSignal,
    ctx: UpdateContext,
    c: int,
    normalize: bool = False,
    pick: tuple[int, int] | None = None,
) -> tuple[LossTerms, torch.Tensor, torch.Tensor]:
    """
    c * L_lcm - c1 * r(z1) - c2 * r(z2) with gradients from the reward itself.

    Raises:
        InvalidArgumentError: the reward is not differentiable
    """
    if not r.differentiable:
        raise InvalidArgumentError(f"direct_grad_update needs a differentiable reward, got {r.kind}")
    tcfg = ctx.cfg.train
    n = tcfg.N_s
    trace = cm_sample(f, c, 2, ctx.generator, n=n, mid_timestep=ctx.cfg.distill.mid_timestep, grad=True)
    ctx.budget.chains += n
    i, j = pick if pick is not None else randint(n, 2, ctx.generator).tolist()
    s1 = r.differentiable_score(trace.z1[i], c)
    s2 = r.differentiable_score(trace.z2[j], c)
    if normalize:
        update_stats(ctx.stats1, s1.item())
        update_stats(ctx.stats2, s2.item())
        s1, s2 = normalize_clip(ctx.stats1, s1), normalize_clip(ctx.stats2, s2)
    lcm = offline_term(f, tcfg, ctx.regularizer, ctx.generator)
    return compose_loss(lcm, s1, s2, tcfg), trace.z1.detach(), trace.z2.detach()


def direct_grad_update(f: ConsistencyModel, r: RewardSignal, ctx: UpdateContext, c: int) -> dict:
    terms, z1, z2 = direct_loss(f, r, ctx, c, normalize=ctx.cfg.train.direct_normalize)
    rewards1, rewards2 = r.evaluate(z1, c), r.evaluate(z2, c)
    ctx.budget.reward_evals += 2 * z1.shape[0]
    ctx.step(terms.total)
    return {
        "reward_mean_1step": rewards1.mean().item(),
        "reward_mean_2step": rewards2.mean().item(),
        **terms.as_metrics(),
    }
