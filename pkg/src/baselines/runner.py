"""
Shared fine-tuning loop.

Every method samples the same N_s chains per student update, applies the
same offline regularizer, and keeps an EMA copy for evaluation; only the
update rule differs. LaSRO and its alternative scheme route to
finetune_lasro.
"""

import logging
from collections.abc import Callable, Sequence
from functools import partial

import torch

from ..cfg.config import RunConfig
from ..consistency.distill import DistillRegularizer, ema_update, frozen_copy
from ..consistency.model import ConsistencyModel
from ..rewards.signals import RewardSignal
from ..rewards.surrogate import SurrogateReward
from ..training.finetune import CheckpointCallback, FinetuneResult, StepCallback, finetune_lasro
from ..training.optim import make_optimizer
from ..training.pretrain import draw_condition
from ..utils.errors import InvalidArgumentError
from ..utils.seeding import make_generator
from .context import UpdateContext
from .direct import direct_grad_update
from .gors import gors_update
from .policy_gradient import ddpo_update
from .rwr import rwr_update

logger = logging.getLogger(__name__)

Update = Callable[[ConsistencyModel, RewardSignal, UpdateContext, int], dict]


def baseline_update(method: str, cfg: RunConfig) -> Update:
    if method == "ddpo":
        return partial(ddpo_update, degenerate=cfg.train.ddpo_degenerate)
    if method == "rwr":
        return rwr_update
    if method == "gors":
        return gors_update
    if method == "direct":
        return direct_grad_update
    raise InvalidArgumentError(f"Unknown baseline method: {method}")


def run_baseline(
    method: str,
    cfg: RunConfig,
    f: ConsistencyModel,
    r: RewardSignal,
    regularizer: DistillRegularizer | None,
    conditions: Sequence[int],
    iters: int,
    seed: int | torch.Generator,
    on_step: StepCallback | None = None,
    on_checkpoint: CheckpointCallback | None = None,
) -> FinetuneResult:
    """Run `iters` student updates of a baseline method."""
    update = baseline_update(method, cfg)
    if method == "direct" and not r.differentiable:
        raise InvalidArgumentError(f"direct needs a differentiable reward, got {r.kind}")
    generator = make_generator(seed)
    ctx = UpdateContext(
        cfg=cfg,
        optimizer=make_optimizer(f.parameters(), cfg.train.eta1, cfg.train.optimizer),
        regularizer=regularizer,
        generator=generator,
    )
    ema = frozen_copy(f)
    result = FinetuneResult(f=f, ema=ema, R=None, budget=ctx.budget)

    for step in range(iters):
        c = draw_condition(conditions, generator)
        metrics = update(f, r, ctx, c)
        ema_update(f, ema, cfg.train.mu)
        if regularizer is not None and method != "gors":
            regularizer.update_target(f)
        metrics.update(ctx.budget.as_metrics())
        result.history.append(metrics)
        if on_step is not None:
            on_step(step, metrics)
        if step % 100 == 0:
            logger.info(f"{method} step {step}/{iters}: reward_2step={metrics['reward_mean_2step']:.4f}")
        if on_checkpoint is not None and (step + 1) % cfg.train.checkpoint_every == 0:
            on_checkpoint(step + 1, f, ema)

    return result


def run_finetune(
    method: str,
    cfg: RunConfig,
    f: ConsistencyModel,
    r: RewardSignal,
    regularizer: DistillRegularizer | None,
    conditions: Sequence[int],
    iters: int,
    seed: int | torch.Generator,
    R: SurrogateReward | None = None,
    on_step: StepCallback | None = None,
    on_checkpoint: CheckpointCallback | None = None,
) -> FinetuneResult:
    """
    Fine-tune the student with `method`.

    Args:
        method: lasro, altft, ddpo, rwr, gors or direct
        R: Pre-trained surrogate (lasro and altft only)

    Raises:
        InvalidArgumentError: unknown method, or lasro/altft without a surrogate
    """
    if method in ("lasro", "altft"):
        if R is None:
            raise InvalidArgumentError(f"{method} needs a pre-trained surrogate")
        scheme = "two_step" if method == "lasro" else "alt"
        return finetune_lasro(
            cfg, f, R, r, regularizer, conditions, iters, seed,
            scheme=scheme, on_step=on_step, on_checkpoint=on_checkpoint,
        )
    return run_baseline(method, cfg, f, r, regularizer, conditions, iters, seed, on_step, on_checkpoint)
