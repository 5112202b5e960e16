"""
TD-loss check for the two-step sampler.

With the surrogate as the value of each step's output, the squared TD error
of the first transition bootstraps from the best second-step output of the
same group; the second transition is terminal. At gamma = 0 the TD loss
equals the sum of the two per-step regression losses.
"""

from collections.abc import Callable
from dataclasses import asdict, dataclass

import pandas as pd
import torch

from ..consistency.sampling import TwoStepTrace
from ..utils.errors import InvalidArgumentError

Scorer = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


@dataclass
class TDReport:
    l_td: float
    l_two_term: float
    max_abs_diff: float
    gamma: float
    n_traces: int

    @property
    def equal(self) -> bool:
        return self.max_abs_diff <= 1e-10

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(self)])


def _group_max(values: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
    """Per chain, the max of `values` over chains with the same condition."""
    same = c.reshape(-1, 1) == c.reshape(1, -1)
    masked = torch.where(same, values.reshape(1, -1), torch.full_like(same, float("-inf"), dtype=values.dtype))
    return masked.max(dim=1).values


@torch.no_grad()
def td_equivalence_check(R: Scorer, r: Scorer, traces: TwoStepTrace, gamma: float = 0.0) -> TDReport:
    """
    Compare the H=2 TD loss with the two-term regression loss.

    Args:
        R: Surrogate (or any scorer) (z, c) -> (n,)
        r: Black-box reward (z, c) -> (n,)
        traces: Batch of two-step traces; chains sharing a condition form a group
        gamma: Discount; equality only holds at 0

    Returns:
        TDReport; max_abs_diff is the largest per-trace discrepancy
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidArgumentError(f"gamma must lie in [0, 1], got {gamma}")
    z1, z2, c = traces.z1, traces.z2, traces.c
    R1, R2 = R(z1, c), R(z2, c)
    r1, r2 = r(z1, c), r(z2, c)

    bootstrap = gamma * _group_max(R2, c) if gamma != 0 else torch.zeros_like(R1)
    td = (R1 - (r1 + bootstrap)) ** 2 + (R2 - r2) ** 2
    two_term = (R1 - r1) ** 2 + (R2 - r2) ** 2

    return TDReport(
        l_td=float(td.mean()),
        l_two_term=float(two_term.mean()),
        max_abs_diff=float((td - two_term).abs().max()),
        gamma=gamma,
        n_traces=int(z1.shape[0]),
    )
