"""Black-box rewards, the surrogate reward model and W/L pair mining."""

from .pairs import WLPair, best_index, select_wl_pair, winner_loser_indices
from .signals import (
    ClassifierReward,
    QuantizedReward,
    RewardSignal,
    TargetRegionReward,
    make_reward,
)
from .surrogate import (
    SurrogateReward,
    build_surrogate,
    pair_loss_from_scores,
    surrogate_pair_loss,
    surrogate_score,
)

__all__ = [
    "ClassifierReward",
    "QuantizedReward",
    "RewardSignal",
    "SurrogateReward",
    "TargetRegionReward",
    "WLPair",
    "best_index",
    "build_surrogate",
    "make_reward",
    "pair_loss_from_scores",
    "select_wl_pair",
    "surrogate_pair_loss",
    "surrogate_score",
    "winner_loser_indices",
]
