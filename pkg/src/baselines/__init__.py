"""Competing fine-tuners sharing the LaSRO sample budget and regularizer."""

from ..consistency.sampling import Transition
from .context import UpdateContext
from .direct import direct_grad_update, direct_loss
from .gors import gors_update
from .policy_gradient import ddpo_update, gaussian_logprob, reinforce_loss
from .runner import run_baseline, run_finetune
from .rwr import rwr_update, rwr_weights, weighted_regression_loss

__all__ = [
    "Transition",
    "UpdateContext",
    "ddpo_update",
    "direct_grad_update",
    "direct_loss",
    "gaussian_logprob",
    "gors_update",
    "reinforce_loss",
    "run_baseline",
    "run_finetune",
    "rwr_update",
    "rwr_weights",
    "weighted_regression_loss",
]
