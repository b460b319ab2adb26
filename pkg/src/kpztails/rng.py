"""Reproducible random streams.

Every sampler takes an :class:`RngHandle` instead of a bare generator so that a
run is fully described by ``(seed, stream)``.  Replica ``r`` of an experiment
uses ``handle.child(r)``; serial and parallel execution therefore draw the
same numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngHandle:
    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if self.stream < 0:
            raise ValueError(f"stream must be non-negative, got {self.stream}")

    def generator(self) -> np.random.Generator:
        """A fresh Philox generator; identical handles give identical draws."""
        ss = np.random.SeedSequence([self.seed, self.stream])
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngHandle":
        """Derived stream for replica/sub-task ``index``."""
        # Cantor-style pairing keeps children of different parents distinct.
        s = self.stream
        return RngHandle(self.seed, (s + index) * (s + index + 1) // 2 + index + 1)


def as_generator(rng: RngHandle | np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngHandle):
        return rng.generator()
    if rng is None:
        return np.random.default_rng()
    return RngHandle(int(rng)).generator()
