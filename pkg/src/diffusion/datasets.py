"""
Synthetic conditional datasets in R^d.

Each class label stands in for a prompt: samples of class c concentrate on
the c-th mixture component, spiral arm or checkerboard cell group.
"""

import math
from dataclasses import dataclass

import torch

from ..cfg.config import DTYPE
from ..utils.errors import InvalidArgumentError
from ..utils.seeding import make_generator, randint, randn

DATASET_KINDS = ("mixture", "spiral", "checkerboard")

MIXTURE_RADIUS = 4.0
MIXTURE_STD = 0.4
SPIRAL_NOISE = 0.1
CHECKER_CELLS = 4
CHECKER_HALF_WIDTH = 4.0
EXTRA_DIM_STD = 0.1


@dataclass
class ToyDataset:
    """Per-class sampler over R^d; the mixture kind also has an analytic density."""

    kind: str
    d: int
    C: int
    seed: int
    means: torch.Tensor
    std: float

    @property
    def has_density(self) -> bool:
        return self.kind == "mixture"

    def _labels(self, c, n: int) -> torch.Tensor:
        c = torch.as_tensor(c, dtype=torch.long)
        if c.dim() == 0:
            c = c.expand(n)
        if bool(((c < 0) | (c >= self.C)).any()):
            raise InvalidArgumentError(f"condition outside [0, {self.C})")
        return c

    def sample(self, c, n: int, seed: int | torch.Generator) -> torch.Tensor:
        """
        Draw n points for condition(s) c.

        Args:
            c: Class label or LongTensor (n,)
            n: Number of points
            seed: Seed or generator; identical seeds give identical draws

        Returns:
            Tensor (n, d)
        """
        generator = make_generator(seed)
        labels = self._labels(c, n)
        if self.kind == "mixture":
            return self.means[labels] + self.std * randn(n, self.d, generator=generator)
        if self.kind == "spiral":
            return self._sample_spiral(labels, generator)
        return self._sample_checkerboard(labels, generator)

    def sample_labeled(self, n: int, seed: int | torch.Generator) -> tuple[torch.Tensor, torch.Tensor]:
        """Draw (x, c) with labels uniform over the C classes."""
        generator = make_generator(seed)
        labels = randint(self.C, n, generator)
        return self.sample(labels, n, generator), labels

    def _extra_dims(self, labels: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        n = labels.shape[0]
        return self.means[labels, 2:] + EXTRA_DIM_STD * randn(n, self.d - 2, generator=generator)

    def _sample_spiral(self, labels: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        n = labels.shape[0]
        s = torch.rand(n, generator=generator, dtype=DTYPE)
        angle = 2 * math.pi * labels.to(DTYPE) / self.C + 1.5 * math.pi * s
        radius = 0.5 + 3.5 * s
        plane = torch.stack([radius * torch.cos(angle), radius * torch.sin(angle)], dim=-1)
        plane = plane + SPIRAL_NOISE * randn(n, 2, generator=generator)
        return torch.cat([plane, self._extra_dims(labels, generator)], dim=-1)

    def _sample_checkerboard(self, labels: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
        n = labels.shape[0]
        cells = [
            (i, j) for i in range(CHECKER_CELLS) for j in range(CHECKER_CELLS) if (i + j) % 2 == 0
        ]
        # class c owns the dark cells whose index is congruent to c modulo C
        owned = [
            [k for k in range(len(cells)) if k % self.C == c] or [c % len(cells)]
            for c in range(self.C)
        ]
        picks = torch.empty(n, dtype=torch.long)
        for c in range(self.C):
            mask = labels == c
            count = int(mask.sum())
            if count == 0:
                continue
            options = owned[c]
            choice = randint(len(options), count, generator)
            picks[mask] = torch.as_tensor(options, dtype=torch.long)[choice]
        cell_size = 2 * CHECKER_HALF_WIDTH / CHECKER_CELLS
        corner = torch.as_tensor([cells[k] for k in picks.tolist()], dtype=DTYPE) * cell_size
        plane = corner - CHECKER_HALF_WIDTH + cell_size * torch.rand(n, 2, generator=generator, dtype=DTYPE)
        return torch.cat([plane, self._extra_dims(labels, generator)], dim=-1)

    def class_centers(self, n: int = 2000) -> torch.Tensor:
        """Per-class centers (C, d): analytic for the mixture, empirical otherwise."""
        if self.kind == "mixture":
            return self.means.clone()
        generator = make_generator(self.seed)
        return torch.stack([self.sample(c, n, generator).mean(0) for c in range(self.C)])

    def log_density(self, x: torch.Tensor, c=None) -> torch.Tensor:
        """
        Analytic log-density of the mixture.

        Args:
            x: Points (n, d)
            c: Optional labels; class-conditional density when given,
                otherwise the uniform mixture over all classes

        Raises:
            InvalidArgumentError: the dataset kind has no closed-form density
        """
        if not self.has_density:
            raise InvalidArgumentError(f"{self.kind} dataset has no analytic density")
        var = self.std**2
        log_norm = -0.5 * self.d * math.log(2 * math.pi * var)
        sq = ((x.unsqueeze(1) - self.means.unsqueeze(0)) ** 2).sum(-1)  # (n, C)
        comp = log_norm - 0.5 * sq / var
        if c is not None:
            labels = self._labels(c, x.shape[0])
            return comp.gather(1, labels.reshape(-1, 1)).squeeze(1)
        return torch.logsumexp(comp, dim=1) - math.log(self.C)


def make_toy_dataset(kind: str, d: int, C: int, seed: int) -> ToyDataset:
    """
    Build a synthetic conditional dataset.

    Args:
        kind: "mixture", "spiral" or "checkerboard"
        d: Data dimension in [2, 16]
        C: Number of condition labels (>= 1)
        seed: Fixes the layout of the dimensions beyond the first two

    Raises:
        InvalidArgumentError: unknown kind or out-of-range d / C
    """
    if kind not in DATASET_KINDS:
        raise InvalidArgumentError(f"Unknown dataset kind: {kind}")
    if not 2 <= d <= 16:
        raise InvalidArgumentError(f"d must lie in [2, 16], got {d}")
    if C < 1:
        raise InvalidArgumentError(f"C must be >= 1, got {C}")

    generator = make_generator(seed)
    angles = 2 * math.pi * torch.arange(C, dtype=DTYPE) / C
    means = torch.zeros(C, d, dtype=DTYPE)
    if kind == "mixture":
        means[:, 0] = MIXTURE_RADIUS * torch.cos(angles)
        means[:, 1] = MIXTURE_RADIUS * torch.sin(angles)
    if d > 2:
        means[:, 2:] = randn(C, d - 2, generator=generator)

    return ToyDataset(kind=kind, d=d, C=C, seed=seed, means=means, std=MIXTURE_STD)
