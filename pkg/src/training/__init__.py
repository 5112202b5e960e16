"""Surrogate pre-training, normalization/clipping statistics and LaSRO fine-tuning."""

from .buffer import ReplayBuffer
from .finetune import (
    FinetuneResult,
    LossTerms,
    alt_ft_step,
    finetune_lasro,
    lasro_ft_loss,
)
from .pretrain import make_holdout_pairs, pairwise_accuracy, pretrain_surrogate
from .stats import RunningStats, SampleBudget, normalize_clip, update_stats

__all__ = [
    "FinetuneResult",
    "LossTerms",
    "ReplayBuffer",
    "RunningStats",
    "SampleBudget",
    "alt_ft_step",
    "finetune_lasro",
    "lasro_ft_loss",
    "make_holdout_pairs",
    "normalize_clip",
    "pairwise_accuracy",
    "pretrain_surrogate",
    "update_stats",
]
