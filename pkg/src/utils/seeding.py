"""Explicit random generators so every sampling routine is a pure function of its seed."""

import torch

from ..cfg.config import DTYPE


def make_generator(seed: int | torch.Generator) -> torch.Generator:
    """
    Return a CPU generator for `seed`, passing existing generators through.

    Args:
        seed: Integer seed or an already-seeded generator

    Returns:
        torch.Generator
    """
    if isinstance(seed, torch.Generator):
        return seed
    generator = torch.Generator()
    generator.manual_seed(int(seed))
    return generator


def randn(*shape: int, generator: torch.Generator, dtype: torch.dtype = DTYPE) -> torch.Tensor:
    """Standard normal draws in the package dtype."""
    return torch.randn(*shape, generator=generator, dtype=dtype)


def randint(high: int, size: int, generator: torch.Generator, low: int = 0) -> torch.Tensor:
    """Uniform integer draws in [low, high)."""
    return torch.randint(low, high, (size,), generator=generator)
