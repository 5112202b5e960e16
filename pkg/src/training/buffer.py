"""Replay buffer of W/L pairs consumed by online surrogate adaptation."""

from collections import deque

import torch

from ..rewards.pairs import WLPair
from ..utils.errors import InvalidArgumentError, InvalidStateError
from ..utils.seeding import randint


class ReplayBuffer:
    """Bounded FIFO of WLPair records with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise InvalidArgumentError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._pairs: deque[WLPair] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._pairs)

    def __iter__(self):
        return iter(self._pairs)

    def add(self, pair: WLPair | None) -> None:
        if pair is not None:
            self._pairs.append(pair)

    def clear(self) -> None:
        self._pairs.clear()

    def sample(self, k: int, generator: torch.Generator) -> list[WLPair]:
        """
        k pairs drawn uniformly with replacement.

        Raises:
            InvalidStateError: empty buffer
        """
        if not self._pairs:
            raise InvalidStateError("Cannot sample from an empty replay buffer")
        return [self._pairs[i] for i in randint(len(self._pairs), k, generator).tolist()]
