"""Optimizer factory shared by the student, the surrogate and the baselines."""

from collections.abc import Iterable

import torch

from ..utils.errors import InvalidArgumentError


def make_optimizer(params: Iterable[torch.nn.Parameter], lr: float, kind: str = "adam") -> torch.optim.Optimizer:
    if kind == "adam":
        return torch.optim.Adam(params, lr=lr)
    if kind == "sgd":
        return torch.optim.SGD(params, lr=lr)
    raise InvalidArgumentError(f"Unknown optimizer: {kind}")
