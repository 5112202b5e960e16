"""State shared by every baseline update: optimizer, regularizer, counters."""

from dataclasses import dataclass, field

import torch

from ..cfg.config import RunConfig
from ..consistency.distill import DistillRegularizer
from ..training.finetune import make_stats
from ..training.stats import RunningStats, SampleBudget


@dataclass
class UpdateContext:
    cfg: RunConfig
    optimizer: torch.optim.Optimizer
    regularizer: DistillRegularizer | None
    generator: torch.Generator
    budget: SampleBudget = field(default_factory=SampleBudget)
    stats1: RunningStats | None = None
    stats2: RunningStats | None = None

    def __post_init__(self):
        if self.stats1 is None:
            self.stats1 = make_stats(self.cfg.train)
        if self.stats2 is None:
            self.stats2 = make_stats(self.cfg.train)

    def step(self, loss: torch.Tensor) -> None:
        self.optimizer.zero_grad()
        loss.backward()
        self.optimizer.step()
        self.budget.theta_updates += 1
