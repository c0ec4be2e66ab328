"""Reproducible, splittable random streams.

Every random draw in the package comes from a :class:`Seed`, a (64-bit
seed, replica index, stream label) triple mapped onto numpy's counter-based
Philox generator through ``SeedSequence``. Distinct triples give
statistically independent streams; identical triples give identical draws.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class Seed:
    seed: int
    index: int = 0
    stream: str = ""

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 bits")
        if self.index < 0:
            raise ValueError("replica index must be >= 0")

    def child(self, stream: str) -> "Seed":
        """Independent sub-stream of this replica (e.g. ``"X"``, ``"Y"``)."""
        label = f"{self.stream}/{stream}" if self.stream else stream
        return Seed(self.seed, self.index, label)

    def replica(self, index: int) -> "Seed":
        return Seed(self.seed, index, self.stream)

    def generator(self) -> np.random.Generator:
        key = [self.seed & 0xFFFFFFFF, self.seed >> 32, self.index, zlib.crc32(self.stream.encode())]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def as_seed(seed: int | Seed) -> Seed:
    return seed if isinstance(seed, Seed) else Seed(int(seed))
