"""
Surrogate pre-training: sample groups of two-step traces from the distilled
student, mine one W/L pair per sampler step, and fit the surrogate to the
black-box rankings.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import torch

from ..cfg.config import RunConfig
from ..consistency.model import ConsistencyModel
from ..consistency.sampling import TwoStepTrace, cm_sample
from ..rewards.pairs import WLPair, select_wl_pair
from ..rewards.signals import RewardSignal
from ..rewards.surrogate import SurrogateReward, surrogate_pair_loss
from ..utils.errors import DegenerateRewardError, InvalidArgumentError
from ..utils.seeding import make_generator, randint
from .optim import make_optimizer
from .stats import SampleBudget

logger = logging.getLogger(__name__)

# Consecutive iterations without a usable pair before giving up
MAX_EMPTY_ITERATIONS = 100


@dataclass
class MintedGroup:
    """One sampled group with its black-box rewards and mined pairs."""

    trace: TwoStepTrace
    c: int
    rewards1: torch.Tensor
    rewards2: torch.Tensor
    pair1: WLPair | None
    pair2: WLPair | None

    @property
    def pairs(self) -> list[WLPair]:
        return [p for p in (self.pair1, self.pair2) if p is not None]


def draw_condition(conditions: Sequence[int], generator: torch.Generator) -> int:
    return int(conditions[int(randint(len(conditions), 1, generator)[0])])


def mint_group(
    f: ConsistencyModel,
    r: RewardSignal,
    c: int,
    n_samples: int,
    generator: torch.Generator,
    mid_timestep: int | None = None,
    grad: bool = False,
    budget: SampleBudget | None = None,
) -> MintedGroup:
    """Sample n_samples two-step traces for condition c and mine both pairs."""
    trace = cm_sample(f, c, 2, generator, n=n_samples, mid_timestep=mid_timestep, grad=grad)
    rewards1 = r.evaluate(trace.z1, c)
    rewards2 = r.evaluate(trace.z2, c)
    if budget is not None:
        budget.chains += n_samples
        budget.reward_evals += 2 * n_samples
    pair1 = select_wl_pair(trace.z1, c, r, step_index=1, rewards=rewards1) if n_samples >= 2 else None
    pair2 = select_wl_pair(trace.z2, c, r, step_index=2, rewards=rewards2) if n_samples >= 2 else None
    return MintedGroup(trace, c, rewards1, rewards2, pair1, pair2)


@torch.no_grad()
def pairwise_accuracy(R: SurrogateReward, pairs: Sequence[WLPair]) -> float:
    """Fraction of pairs the surrogate ranks like the black-box reward."""
    if not pairs:
        return float("nan")
    z_w = torch.stack([p.z_w for p in pairs])
    z_l = torch.stack([p.z_l for p in pairs])
    c = torch.as_tensor([p.c for p in pairs], dtype=torch.long)
    return float((R(z_w, c) > R(z_l, c)).to(torch.float64).mean())


def make_holdout_pairs(
    f: ConsistencyModel,
    r: RewardSignal,
    conditions: Sequence[int],
    n_pairs: int,
    n_samples: int,
    seed: int | torch.Generator,
    mid_timestep: int | None = None,
) -> list[WLPair]:
    """Mint up to n_pairs evaluation pairs (both steps) from fresh traces."""
    generator = make_generator(seed)
    pairs: list[WLPair] = []
    for _ in range(10 * n_pairs):
        if len(pairs) >= n_pairs:
            break
        group = mint_group(f, r, draw_condition(conditions, generator), n_samples, generator, mid_timestep)
        pairs.extend(group.pairs)
    if len(pairs) < n_pairs:
        logger.warning(f"Only {len(pairs)} of {n_pairs} holdout pairs could be minted")
    return pairs[:n_pairs]


def pretrain_surrogate(
    cfg: RunConfig,
    f: ConsistencyModel,
    R: SurrogateReward,
    r: RewardSignal,
    conditions: Sequence[int],
    iters: int,
    seed: int | torch.Generator,
    holdout: Sequence[WLPair] | None = None,
    on_step: Callable[[int, dict], None] | None = None,
    eval_every: int = 100,
) -> tuple[SurrogateReward, list[float]]:
    """
    Fit the surrogate on pairs mined from the student's two-step samples.

    Each iteration descends L1 + L2, the pair losses of the first- and
    second-step groups; a group the reward does not separate contributes
    nothing.

    Args:
        cfg: Run config (train.N_s, train.eta, train.optimizer, distill.mid_timestep)
        f: Distilled student, sampled without gradients
        R: Surrogate, updated in place
        r: Black-box reward
        conditions: Condition labels drawn uniformly per iteration
        iters: Number of iterations
        seed: Seed or generator
        holdout: Optional evaluation pairs for the accuracy metric
        on_step: Callback (step, metrics)
        eval_every: Holdout evaluation period

    Returns:
        Tuple of (R, loss trace); skipped iterations are not in the trace

    Raises:
        DegenerateRewardError: 100 consecutive iterations without a pair
    """
    if cfg.train.N_s < 2:
        raise InvalidArgumentError(f"Pair mining needs N_s >= 2, got {cfg.train.N_s}")
    if not conditions:
        raise InvalidArgumentError("pretrain_surrogate needs at least one condition")

    generator = make_generator(seed)
    optimizer = make_optimizer(R.parameters(), cfg.train.eta, cfg.train.optimizer)
    losses: list[float] = []
    empty_run = 0

    for step in range(iters):
        c = draw_condition(conditions, generator)
        group = mint_group(f, r, c, cfg.train.N_s, generator, cfg.distill.mid_timestep)
        pairs = group.pairs
        if not pairs:
            empty_run += 1
            if empty_run >= MAX_EMPTY_ITERATIONS:
                logger.error(f"No usable W/L pair in {empty_run} consecutive iterations")
                raise DegenerateRewardError(
                    f"Reward did not separate any sampled group in {empty_run} consecutive iterations"
                )
            continue
        empty_run = 0

        loss = sum(surrogate_pair_loss(R, p) for p in pairs)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(loss.item())

        metrics = {"loss_surrogate": losses[-1], "pairs": len(pairs)}
        if holdout and (step % eval_every == 0 or step == iters - 1):
            metrics["surrogate_acc"] = pairwise_accuracy(R, holdout)
            logger.info(f"Surrogate step {step}/{iters}: loss={losses[-1]:.4f}, acc={metrics['surrogate_acc']:.3f}")
        if on_step is not None:
            on_step(step, metrics)

    return R, losses
