"""
LaSRO fine-tuning.

Each outer iteration clears the replay buffer, runs N1 student updates on
c * L_lcm - c1 * S[R(z1)] - c2 * S[R(z2)] while minting W/L pairs from the
sampled groups, then adapts the surrogate on N2 batches drawn from those
pairs. An EMA copy of the student is kept for evaluation only.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import torch

from ..cfg.config import DTYPE, RunConfig, TrainConfig
from ..consistency.distill import DistillRegularizer, draw_grid_timesteps, ema_update, frozen_copy
from ..consistency.model import ConsistencyModel
from ..consistency.sampling import TwoStepTrace
from ..diffusion.schedule import forward_diffuse
from ..rewards.signals import RewardSignal
from ..rewards.surrogate import SurrogateReward, surrogate_pair_loss, surrogate_score
from ..utils.errors import InvalidArgumentError
from ..utils.seeding import make_generator, randint, randn
from .buffer import ReplayBuffer
from .optim import make_optimizer
from .pretrain import draw_condition, mint_group, pairwise_accuracy
from .stats import RunningStats, SampleBudget, normalize_clip, update_stats

logger = logging.getLogger(__name__)

FINETUNE_SCHEMES = ("two_step", "alt")

StepCallback = Callable[[int, dict], None]
CheckpointCallback = Callable[[int, ConsistencyModel, ConsistencyModel], None]


@dataclass
class LossTerms:
    total: torch.Tensor
    lcm: torch.Tensor
    s1: torch.Tensor
    s2: torch.Tensor

    def as_metrics(self) -> dict[str, float]:
        return {
            "loss_total": self.total.item(),
            "loss_lcm": self.lcm.item(),
            "s1": self.s1.item(),
            "s2": self.s2.item(),
        }


@dataclass
class FinetuneResult:
    f: ConsistencyModel
    ema: ConsistencyModel
    R: SurrogateReward | None
    budget: SampleBudget
    history: list[dict] = field(default_factory=list)


def make_stats(cfg: TrainConfig) -> RunningStats:
    return RunningStats(decay=cfg.stats_decay, window_size=cfg.stats_window, floor=cfg.stats_floor)


def compose_loss(lcm: torch.Tensor, s1: torch.Tensor, s2: torch.Tensor, cfg: TrainConfig) -> LossTerms:
    """c * L_lcm - c1 * s1 - c2 * s2, minimized over the student."""
    return LossTerms(total=cfg.c * lcm - cfg.c1 * s1 - cfg.c2 * s2, lcm=lcm, s1=s1, s2=s2)


def offline_term(
    f: ConsistencyModel,
    cfg: TrainConfig,
    regularizer: DistillRegularizer | None,
    generator: torch.Generator,
    distill_batch: tuple[torch.Tensor, torch.Tensor] | None = None,
) -> torch.Tensor:
    """L_lcm on the given batch, a fresh regularizer batch, or 0 when c = 0."""
    if cfg.c == 0 or regularizer is None:
        return torch.zeros((), dtype=DTYPE)
    if distill_batch is not None:
        x0, c = distill_batch
        if x0.shape[0] == 0:
            raise InvalidArgumentError("distill_batch must be nonempty")
        return regularizer.loss_on(f, x0, c, generator)
    return regularizer.loss(f, generator)


def _normalized(R: SurrogateReward, z: torch.Tensor, c, stats: RunningStats, normalize: bool) -> torch.Tensor:
    score = surrogate_score(R, z, c)
    if not normalize:
        return score
    update_stats(stats, score.item())
    return normalize_clip(stats, score)


def lasro_ft_loss(
    f: ConsistencyModel,
    R: SurrogateReward,
    trace: TwoStepTrace,
    stats1: RunningStats,
    stats2: RunningStats,
    cfg: TrainConfig,
    regularizer: DistillRegularizer | None,
    seed: int | torch.Generator,
    distill_batch: tuple[torch.Tensor, torch.Tensor] | None = None,
    pick: tuple[int, int] | None = None,
    normalize: bool = True,
) -> LossTerms:
    """
    Fine-tuning loss on one sampled group.

    One z1 and one z2 are chosen uniformly from the group; their surrogate
    scores are pushed into stats1/stats2 and mapped through S. Gradients reach
    the student through z1 and z2 (the trace must be sampled with grad=True).

    Args:
        f: Student being fine-tuned
        R: Surrogate; its gradients are not used here
        trace: Two-step trace carrying the student's graph
        stats1: Running stats of first-step scores
        stats2: Running stats of second-step scores
        cfg: Coefficients c, c1, c2
        regularizer: Offline distillation term; ignored when c = 0
        seed: Seed or generator for the picks and the distillation batch
        distill_batch: Optional explicit (x0, c) distillation batch
        pick: Optional (z1 index, z2 index) instead of uniform picks
        normalize: Apply S; raw scores otherwise
    """
    generator = make_generator(seed)
    n = trace.z2.shape[0]
    if pick is None:
        i, j = randint(n, 2, generator).tolist()
    else:
        i, j = pick
    s1 = _normalized(R, trace.z1[i], trace.c[i], stats1, normalize) if cfg.c1 > 0 else torch.zeros((), dtype=DTYPE)
    s2 = _normalized(R, trace.z2[j], trace.c[j], stats2, normalize) if cfg.c2 > 0 else torch.zeros((), dtype=DTYPE)
    lcm = offline_term(f, cfg, regularizer, generator, distill_batch)
    return compose_loss(lcm, s1, s2, cfg)


def alt_ft_loss(
    f: ConsistencyModel,
    R: SurrogateReward,
    regularizer: DistillRegularizer | None,
    stats: RunningStats,
    cfg: TrainConfig,
    seed: int | torch.Generator,
    t: int | None = None,
) -> LossTerms:
    """
    Alternative scheme: score f(x_t, t, c) for x_t a noised dataset point with
    t drawn on the distillation grid, instead of the sampler's own outputs.
    """
    if regularizer is None:
        raise InvalidArgumentError("The alternative scheme needs a regularizer to draw data points from")
    generator = make_generator(seed)
    sched = f.sched
    x0, c = regularizer.dataset.sample_labeled(cfg.N_s, generator)
    if t is None:
        timesteps = draw_grid_timesteps(sched, regularizer.skip, cfg.N_s, generator)
    else:
        timesteps = torch.full((cfg.N_s,), t, dtype=torch.long)
    x_t = forward_diffuse(x0, timesteps, randn(*x0.shape, generator=generator), sched)
    z = f(x_t, timesteps, c)
    i = int(randint(cfg.N_s, 1, generator)[0])
    s1 = _normalized(R, z[i], c[i], stats, True)
    lcm = offline_term(f, cfg, regularizer, generator)
    zero = torch.zeros((), dtype=s1.dtype)
    return LossTerms(total=cfg.c * lcm - cfg.c1 * s1, lcm=lcm, s1=s1, s2=zero)


def alt_ft_step(
    f: ConsistencyModel,
    R: SurrogateReward,
    regularizer: DistillRegularizer | None,
    stats: RunningStats,
    cfg: TrainConfig,
    optimizer: torch.optim.Optimizer,
    seed: int | torch.Generator,
    t: int | None = None,
) -> LossTerms:
    """One student update under the alternative scheme."""
    terms = alt_ft_loss(f, R, regularizer, stats, cfg, seed, t=t)
    optimizer.zero_grad()
    terms.total.backward()
    optimizer.step()
    return terms


def adapt_surrogate(
    R: SurrogateReward,
    buffer: ReplayBuffer,
    optimizer: torch.optim.Optimizer,
    steps: int,
    batch_size: int,
    generator: torch.Generator,
) -> list[float]:
    """Online adaptation: `steps` pair-loss updates on buffer batches."""
    losses = []
    for _ in range(steps):
        loss = surrogate_pair_loss(R, buffer.sample(batch_size, generator))
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
    return losses


def finetune_lasro(
    cfg: RunConfig,
    f: ConsistencyModel,
    R: SurrogateReward,
    r: RewardSignal,
    regularizer: DistillRegularizer | None,
    conditions: Sequence[int],
    outer_iters: int,
    seed: int | torch.Generator,
    scheme: str = "two_step",
    on_step: StepCallback | None = None,
    on_checkpoint: CheckpointCallback | None = None,
) -> FinetuneResult:
    """
    Alternate student fine-tuning and online surrogate adaptation.

    Args:
        cfg: Run config (train section for N_s, N1, N2, coefficients, rates)
        f: Distilled student, updated in place
        R: Pre-trained surrogate, updated in place
        r: Black-box reward used for pair mining
        regularizer: Offline distillation term
        conditions: Condition labels drawn uniformly per step
        outer_iters: Number of outer iterations
        seed: Seed or generator
        scheme: "two_step" (sampler outputs) or "alt" (noised data points)
        on_step: Callback (outer step, metrics)
        on_checkpoint: Callback (outer step, f, ema) every train.checkpoint_every

    Returns:
        FinetuneResult with the EMA copy, budget counters and metric history
    """
    if scheme not in FINETUNE_SCHEMES:
        raise InvalidArgumentError(f"Unknown fine-tuning scheme: {scheme}")
    if scheme == "alt" and regularizer is None:
        raise InvalidArgumentError("The alternative scheme needs a regularizer")
    if not conditions:
        raise InvalidArgumentError("finetune_lasro needs at least one condition")
    tcfg = cfg.train
    generator = make_generator(seed)
    theta_opt = make_optimizer(f.parameters(), tcfg.eta1, tcfg.optimizer)
    psi_opt = make_optimizer(R.parameters(), tcfg.eta2, tcfg.optimizer)
    ema = frozen_copy(f)
    stats1, stats2 = make_stats(tcfg), make_stats(tcfg)
    buffer = ReplayBuffer(tcfg.buffer_capacity)
    budget = SampleBudget()
    result = FinetuneResult(f=f, ema=ema, R=R, budget=budget)

    for step in range(outer_iters):
        buffer.clear()
        rewards1, rewards2, terms = [], [], None
        for _ in range(tcfg.N1):
            c = draw_condition(conditions, generator)
            group = mint_group(
                f, r, c, tcfg.N_s, generator, cfg.distill.mid_timestep, grad=scheme == "two_step", budget=budget
            )
            for pair in group.pairs:
                buffer.add(pair)
            rewards1.append(group.rewards1.mean().item())
            rewards2.append(group.rewards2.mean().item())

            if scheme == "two_step":
                terms = lasro_ft_loss(f, R, group.trace, stats1, stats2, tcfg, regularizer, generator)
                theta_opt.zero_grad()
                terms.total.backward()
                theta_opt.step()
            else:
                terms = alt_ft_step(f, R, regularizer, stats1, tcfg, theta_opt, generator)
            budget.theta_updates += 1
            ema_update(f, ema, tcfg.mu)
            if regularizer is not None:
                regularizer.update_target(f)

        metrics: dict = {}
        if tcfg.N2 > 0:
            if len(buffer) == 0:
                logger.warning(f"Replay buffer empty at outer step {step}; skipping online adaptation")
            else:
                metrics["surrogate_acc"] = pairwise_accuracy(R, list(buffer))
                adapt = adapt_surrogate(R, buffer, psi_opt, tcfg.N2, tcfg.adapt_batch_size, generator)
                budget.psi_updates += len(adapt)
                metrics["loss_surrogate"] = sum(adapt) / len(adapt)

        if rewards1:
            metrics["reward_mean_1step"] = sum(rewards1) / len(rewards1)
            metrics["reward_mean_2step"] = sum(rewards2) / len(rewards2)
        if terms is not None:
            metrics.update(terms.as_metrics())
        metrics["buffer_size"] = len(buffer)
        metrics.update(budget.as_metrics())
        result.history.append(metrics)
        if on_step is not None:
            on_step(step, metrics)
        if step % 100 == 0:
            logger.info(f"LaSRO step {step}/{outer_iters}: {metrics.get('reward_mean_2step', float('nan')):.4f}")
        if on_checkpoint is not None and (step + 1) % tcfg.checkpoint_every == 0:
            on_checkpoint(step + 1, f, ema)

    return result
