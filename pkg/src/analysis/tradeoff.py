"""Reward vs. fidelity along a sequence of fine-tuning checkpoints."""

import copy
import logging
from collections.abc import Sequence
from pathlib import Path

import pandas as pd
import torch

from ..consistency.model import ConsistencyModel
from ..consistency.sampling import cm_sample
from ..rewards.signals import RewardSignal
from ..utils.checkpoints import load_into, load_manifest
from ..utils.errors import CheckpointLoadError, InvalidArgumentError
from ..utils.seeding import make_generator
from .fidelity import fidelity_proxy

logger = logging.getLogger(__name__)

TRADEOFF_COLUMNS = ["step", "reward_2step", "fidelity", "checkpoint", "error"]


@torch.no_grad()
def evaluate_sampler(
    f: ConsistencyModel,
    r: RewardSignal,
    data_reference: torch.Tensor,
    conditions: Sequence[int],
    n: int,
    seed: int | torch.Generator,
    projections: int = 128,
    mid_timestep: int | None = None,
) -> tuple[float, float, float]:
    """(mean 1-step reward, mean 2-step reward, fidelity proxy of the 2-step samples)."""
    generator = make_generator(seed)
    c = torch.as_tensor([conditions[i % len(conditions)] for i in range(n)], dtype=torch.long)
    trace = cm_sample(f, c, 2, generator, n=n, mid_timestep=mid_timestep)
    one_step = cm_sample(f, c, 1, generator, n=n).final
    reward_1 = float(r.evaluate(one_step, c).mean())
    reward_2 = float(r.evaluate(trace.z2, c).mean())
    return reward_1, reward_2, fidelity_proxy(trace.z2, data_reference, projections, generator)


def tradeoff_report(
    checkpoints: Sequence[str | Path],
    f: ConsistencyModel,
    r: RewardSignal,
    data_reference: torch.Tensor,
    conditions: Sequence[int],
    seed: int,
    samples: int = 256,
    projections: int = 128,
    mid_timestep: int | None = None,
) -> pd.DataFrame:
    """
    One row per checkpoint: step, mean 2-step reward, fidelity proxy.

    A checkpoint that fails to load yields a row carrying the error and the
    report continues.

    Args:
        checkpoints: Student checkpoint payload paths
        f: Student whose architecture matches the checkpoints
        r: Black-box reward
        data_reference: Reference data points for the fidelity proxy
        conditions: Condition labels cycled over the samples
        seed: Evaluation seed, shared by every checkpoint
        samples: Two-step samples per checkpoint

    Returns:
        DataFrame sorted ascending by step

    Raises:
        InvalidArgumentError: fewer than two checkpoints
    """
    if len(checkpoints) < 2:
        raise InvalidArgumentError(f"tradeoff_report needs >= 2 checkpoints, got {len(checkpoints)}")

    rows = []
    for path in checkpoints:
        row = {"step": None, "reward_2step": None, "fidelity": None, "checkpoint": str(path), "error": None}
        try:
            row["step"] = load_manifest(path).step
            model = copy.deepcopy(f)
            load_into(model, path)
            _, row["reward_2step"], row["fidelity"] = evaluate_sampler(
                model, r, data_reference, conditions, samples, seed, projections, mid_timestep
            )
        except (CheckpointLoadError, OSError) as e:
            logger.warning(f"Skipping checkpoint {path}: {e}")
            row["error"] = str(e)
        rows.append(row)

    df = pd.DataFrame(rows, columns=TRADEOFF_COLUMNS)
    df["step"] = pd.to_numeric(df["step"])
    return df.sort_values("step", kind="stable", na_position="last").reset_index(drop=True)
