"""Sliced 1-Wasserstein distance between point sets."""

import torch
from scipy.stats import wasserstein_distance

from ..utils.errors import InvalidArgumentError
from ..utils.seeding import make_generator, randn

MIN_PROJECTIONS = 32


def fidelity_proxy(
    samples_a: torch.Tensor,
    samples_b: torch.Tensor,
    projections: int = 128,
    seed: int | torch.Generator = 0,
) -> float:
    """
    Mean 1-D W1 between the sets projected on random unit directions.

    Raises:
        InvalidArgumentError: empty set, dimension mismatch or too few projections
    """
    if samples_a.shape[0] == 0 or samples_b.shape[0] == 0:
        raise InvalidArgumentError("fidelity_proxy needs two nonempty sets")
    if samples_a.shape[1:] != samples_b.shape[1:]:
        raise InvalidArgumentError("fidelity_proxy sets differ in dimension")
    if projections < MIN_PROJECTIONS:
        raise InvalidArgumentError(f"projections must be >= {MIN_PROJECTIONS}, got {projections}")

    generator = make_generator(seed)
    directions = randn(projections, samples_a.shape[1], generator=generator)
    directions = directions / torch.linalg.vector_norm(directions, dim=-1, keepdim=True)
    proj_a = (samples_a.detach() @ directions.T).numpy()
    proj_b = (samples_b.detach() @ directions.T).numpy()
    distances = [wasserstein_distance(proj_a[:, k], proj_b[:, k]) for k in range(projections)]
    return float(sum(distances) / projections)
