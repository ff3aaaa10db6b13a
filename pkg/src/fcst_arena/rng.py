"""Deterministic random streams.

All randomness in the harness flows through SeededRng so that a run is fully
reproducible from its seed. The underlying bit generator is numpy's PCG64,
whose stream for a given seed is stable across platforms and numpy releases.
"""

from __future__ import annotations

import hashlib

import numpy as np

ALGORITHM = "pcg64"


class SeededRng:
    """Seeded random source backed by numpy PCG64.

    Same seed, same stream, on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.algorithm = ALGORITHM
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, label: str) -> "SeededRng":
        """Independent child stream keyed by (seed, label).

        Used to decouple e.g. weight init from batch shuffling so that adding
        draws to one phase never perturbs the other.
        """
        digest = hashlib.sha256(self.seed.to_bytes(8, "little") + label.encode("utf-8")).digest()
        return SeededRng(int.from_bytes(digest[:8], "little"))

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def random(self, size) -> np.ndarray:
        return self._gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int) -> int:
        return int(self._gen.integers(low, high))
