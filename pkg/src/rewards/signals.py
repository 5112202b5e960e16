"""
Black-box task rewards r(x, c).

Fine-tuners only see rewards through `evaluate`, which returns detached
values. Gradients are exposed through `differentiable_score` and only by
rewards whose `differentiable` flag is set.
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Mapping

import numpy as np
import torch
from sklearn.neural_network import MLPClassifier

from ..cfg.config import DTYPE, RewardConfig
from ..diffusion.datasets import ToyDataset
from ..utils.errors import InvalidArgumentError
from .classifier import load_classifier, train_classifier

logger = logging.getLogger(__name__)

REWARD_KINDS = ("target_region", "quantized", "classifier")


def _batch(x: torch.Tensor, c) -> tuple[torch.Tensor, torch.Tensor, bool]:
    squeeze = x.dim() == 1
    if squeeze:
        x = x.unsqueeze(0)
    c = torch.as_tensor(c, dtype=torch.long)
    if c.dim() == 0:
        c = c.expand(x.shape[0])
    return x, c, squeeze


class RewardSignal(ABC):
    """Deterministic scalar reward over (point, condition)."""

    kind: str = ""
    differentiable: bool = False

    @abstractmethod
    def _score(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        """Rewards (n,) for a batch (n, d)."""

    def evaluate(self, x: torch.Tensor, c) -> torch.Tensor:
        """Detached rewards, (n,) for a batch or 0-d for a single point."""
        x, c, squeeze = _batch(x.detach(), c)
        with torch.no_grad():
            values = self._score(x, c)
        return values.squeeze(0) if squeeze else values

    def differentiable_score(self, x: torch.Tensor, c) -> torch.Tensor:
        """
        Rewards with gradients w.r.t. x.

        Raises:
            InvalidArgumentError: the reward is black-box only
        """
        if not self.differentiable:
            raise InvalidArgumentError(f"{self.kind} reward does not expose gradients")
        x, c, squeeze = _batch(x, c)
        values = self._score(x, c)
        return values.squeeze(0) if squeeze else values

    def __call__(self, x: torch.Tensor, c) -> torch.Tensor:
        return self.evaluate(x, c)


class TargetRegionReward(RewardSignal):
    """r(x, c) = -||x - target(c)||, maximal (0) at the target."""

    kind = "target_region"
    differentiable = True

    def __init__(self, targets: torch.Tensor):
        self.targets = targets.to(DTYPE)

    def _score(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        return -torch.linalg.vector_norm(x - self.targets[c], dim=-1)


class QuantizedReward(RewardSignal):
    """Target-region reward mapped onto the m + 1 levels {0, 1/m, ..., 1}."""

    kind = "quantized"
    differentiable = False

    def __init__(self, targets: torch.Tensor, levels: int, radius: float):
        if levels < 1:
            raise InvalidArgumentError(f"levels must be >= 1, got {levels}")
        if radius <= 0:
            raise InvalidArgumentError(f"radius must be > 0, got {radius}")
        self.targets = targets.to(DTYPE)
        self.levels = levels
        self.radius = radius

    def _score(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        dist = torch.linalg.vector_norm(x - self.targets[c], dim=-1)
        u = torch.clamp(1.0 - dist / self.radius, 0.0, 1.0)
        return torch.round(self.levels * u) / self.levels


class ClassifierReward(RewardSignal):
    """Probability the toy classifier assigns to the requested class."""

    kind = "classifier"
    differentiable = False

    def __init__(self, model: MLPClassifier):
        self.model = model
        self._columns = {int(label): i for i, label in enumerate(model.classes_)}

    def _score(self, x: torch.Tensor, c: torch.Tensor) -> torch.Tensor:
        proba = self.model.predict_proba(x.cpu().numpy())
        # classes never seen in training get probability 0
        padded = np.concatenate([proba, np.zeros((proba.shape[0], 1))], axis=1)
        cols = np.array([self._columns.get(int(label), proba.shape[1]) for label in c.tolist()])
        picked = padded[np.arange(len(cols)), cols]
        return torch.from_numpy(np.clip(picked, 0.0, 1.0)).to(DTYPE)


def default_targets(dataset: ToyDataset, offset: float) -> torch.Tensor:
    """Class centers shifted by `offset` along the first coordinate."""
    targets = dataset.class_centers().clone()
    targets[:, 0] += offset
    return targets


def make_reward(
    kind: str,
    params: RewardConfig | Mapping,
    seed: int,
    dataset: ToyDataset | None = None,
) -> RewardSignal:
    """
    Build a black-box reward.

    Args:
        kind: "target_region", "quantized" or "classifier"
        params: Reward section of the run config (or an equivalent mapping)
        seed: Seed for training the classifier when no path is given
        dataset: Supplies default targets and classifier training data

    Raises:
        InvalidArgumentError: unknown kind, or missing targets / classifier
    """
    if kind not in REWARD_KINDS:
        raise InvalidArgumentError(f"Unknown reward kind: {kind}")
    if isinstance(params, Mapping):
        params = RewardConfig(**{"kind": kind, **params})

    if kind == "classifier":
        if params.classifier_path is not None:
            return ClassifierReward(load_classifier(params.classifier_path))
        if dataset is None:
            raise InvalidArgumentError("classifier reward needs classifier_path or a dataset to train on")
        logger.info("No classifier_path configured; training the toy classifier")
        return ClassifierReward(
            train_classifier(dataset, params.classifier_hidden, params.classifier_samples, seed)
        )

    if params.targets is not None:
        targets = torch.as_tensor(params.targets, dtype=DTYPE)
    elif dataset is not None:
        targets = default_targets(dataset, params.target_offset)
    else:
        raise InvalidArgumentError(f"{kind} reward needs explicit targets or a dataset")
    if targets.dim() != 2:
        raise InvalidArgumentError(f"targets must be a (C, d) matrix, got shape {tuple(targets.shape)}")

    if kind == "target_region":
        return TargetRegionReward(targets)
    return QuantizedReward(targets, params.levels, params.radius)
