"""GORS: generate, keep the best first- and second-step samples, distill on them."""

import torch

from ..consistency.model import ConsistencyModel
from ..consistency.sampling import cm_sample
from ..rewards.pairs import best_index
from ..rewards.signals import RewardSignal
from ..training.finetune import offline_term
from ..utils.errors import InvalidArgumentError
from .context import UpdateContext


def gors_update(
    f: ConsistencyModel,
    r: RewardSignal,
    ctx: UpdateContext,
    c: int,
    n_samples: int | None = None,
) -> dict:
    """
    Distillation loss on the filtered online samples plus the offline term.

    Raises:
        InvalidArgumentError: no regularizer (GORS distills through the teacher)
    """
    if ctx.regularizer is None:
        raise InvalidArgumentError("gors_update needs the teacher's distillation regularizer")
    tcfg = ctx.cfg.train
    n = n_samples or tcfg.N_s
    trace = cm_sample(f, c, 2, ctx.generator, n=n, mid_timestep=ctx.cfg.distill.mid_timestep)
    rewards1 = r.evaluate(trace.z1, c)
    rewards2 = r.evaluate(trace.z2, c)
    ctx.budget.chains += n
    ctx.budget.reward_evals += 2 * n

    selected = torch.stack([trace.z1[best_index(rewards1)], trace.z2[best_index(rewards2)]])
    labels = torch.full((2,), int(c), dtype=torch.long)
    online = ctx.regularizer.loss_on(f, selected, labels, ctx.generator)
    lcm = offline_term(f, tcfg, ctx.regularizer, ctx.generator)
    total = online + tcfg.c * lcm
    ctx.step(total)
    ctx.regularizer.update_target(f)
    return {
        "reward_mean_1step": rewards1.mean().item(),
        "reward_mean_2step": rewards2.mean().item(),
        "loss_online": online.item(),
        "loss_lcm": lcm.item(),
        "loss_total": total.item(),
    }
