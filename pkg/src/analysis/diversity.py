"""Conditional output variance of the H-step sampler at a fixed initial noise."""

import logging
from collections.abc import Sequence

import pandas as pd
import torch

from ..consistency.model import ConsistencyModel
from ..consistency.sampling import SUPPORTED_STEPS, cm_sample
from ..utils.errors import InvalidArgumentError
from ..utils.seeding import make_generator, randn

logger = logging.getLogger(__name__)


@torch.no_grad()
def diversity_probe(
    f: ConsistencyModel,
    conditions: Sequence[int],
    H_list: Sequence[int],
    draws: int,
    seed: int | torch.Generator,
) -> pd.DataFrame:
    """
    Trace of the covariance of final outputs across injected-noise draws.

    One x_T per condition is shared by all draws and all H, so only the
    re-injected noise varies.

    Returns:
        DataFrame with columns H, variance, std_error, draws, conditions
    """
    if any(H not in SUPPORTED_STEPS for H in H_list):
        raise InvalidArgumentError(f"H_list must be a subset of {SUPPORTED_STEPS}, got {list(H_list)}")
    if draws < 2:
        raise InvalidArgumentError(f"draws must be >= 2, got {draws}")
    if not conditions:
        raise InvalidArgumentError("diversity_probe needs at least one condition")

    generator = make_generator(seed)
    x_T = {c: randn(1, f.d, generator=generator).expand(draws, f.d) for c in conditions}
    rows = []
    for H in H_list:
        variances, sq_errors = [], []
        for c in conditions:
            if H == 1:
                # no injected noise: one evaluation stands for every draw
                out = cm_sample(f, c, 1, generator, x_T=x_T[c][:1]).final.expand(draws, f.d)
            else:
                out = cm_sample(f, c, H, generator, x_T=x_T[c]).final
            # centering by the first row keeps identical outputs at exactly zero
            shifted = out - out[:1]
            centered = shifted - shifted.mean(dim=0, keepdim=True)
            spread = (centered**2).sum(dim=-1)
            variances.append(float(spread.sum() / (draws - 1)))
            sq_errors.append(float(spread.std() / draws**0.5) ** 2)
        n = len(conditions)
        rows.append(
            {
                "H": H,
                "variance": sum(variances) / n,
                "std_error": sum(sq_errors) ** 0.5 / n,
                "draws": draws,
                "conditions": n,
            }
        )
        logger.info(f"Diversity H={H}: {rows[-1]['variance']:.6f}")
    return pd.DataFrame(rows)
