"""Toy classifier behind the classifier reward: scikit-learn MLP persisted with joblib."""

import logging
from pathlib import Path

import joblib
from sklearn.neural_network import MLPClassifier

from ..diffusion.datasets import ToyDataset
from ..utils.errors import CheckpointLoadError

logger = logging.getLogger(__name__)


def train_classifier(dataset: ToyDataset, hidden: int, n_samples: int, seed: int) -> MLPClassifier:
    """Fit an MLP on labeled dataset draws; labels are the condition classes."""
    x, c = dataset.sample_labeled(n_samples, seed)
    model = MLPClassifier(hidden_layer_sizes=(hidden, hidden), max_iter=500, random_state=seed)
    model.fit(x.numpy(), c.numpy())
    logger.info(f"Toy classifier trained on {n_samples} points: accuracy={model.score(x.numpy(), c.numpy()):.3f}")
    return model


def save_classifier(model: MLPClassifier, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    joblib.dump(model, path)
    logger.info(f"Saved classifier to {path}")
    return path


def load_classifier(path: str | Path) -> MLPClassifier:
    """
    Load a classifier saved by save_classifier.

    Raises:
        CheckpointLoadError: file missing or not a fitted MLPClassifier
    """
    path = Path(path)
    try:
        model = joblib.load(path)
    except FileNotFoundError as e:
        raise CheckpointLoadError(str(path), "classifier file", "nothing") from e
    if not isinstance(model, MLPClassifier) or not hasattr(model, "classes_"):
        raise CheckpointLoadError(str(path), "fitted MLPClassifier", type(model).__name__)
    return model
