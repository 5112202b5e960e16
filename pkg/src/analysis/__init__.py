"""Diagnostic probes: local Lipschitz, TD equivalence, diversity, fidelity, tradeoff."""

from .diversity import diversity_probe
from .fidelity import fidelity_proxy
from .lipschitz import (
    LipschitzReport,
    density_quality,
    local_lipschitz,
    perturb_neighbor,
    reward_quality,
)
from .td import TDReport, td_equivalence_check
from .tradeoff import TRADEOFF_COLUMNS, evaluate_sampler, tradeoff_report

__all__ = [
    "LipschitzReport",
    "TDReport",
    "TRADEOFF_COLUMNS",
    "density_quality",
    "diversity_probe",
    "evaluate_sampler",
    "fidelity_proxy",
    "local_lipschitz",
    "perturb_neighbor",
    "reward_quality",
    "td_equivalence_check",
    "tradeoff_report",
]
