"""Seed derivation and buffered normal streams.

Every random source in a scenario is a labelled substream of the scenario
seed, so adding a new consumer never perturbs the existing ones.
"""

import zlib

import numpy as np

_BLOCK = 1024


def derive_seed(seed: int, label: str) -> int:
    """Stable 63-bit child seed for ``(seed, label)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode())])
    hi, lo = (int(w) for w in ss.generate_state(2, np.uint32))
    return ((hi << 32) | lo) >> 1


def substream(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, label))


class NormalStream:
    """Standard-normal draws served from pre-generated blocks."""

    def __init__(self, seed: int, label: str):
        self._gen = substream(seed, label)
        self._buf = []
        self._i = 0

    def standard_normal(self) -> float:
        if self._i >= len(self._buf):
            self._buf = self._gen.standard_normal(_BLOCK).tolist()
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return v

    def take(self, n: int) -> list:
        """The next ``n`` draws, in the order :meth:`standard_normal` would give them."""
        end = self._i + n
        if end <= len(self._buf):
            out = self._buf[self._i:end]
            self._i = end
            return out
        return [self.standard_normal() for _ in range(n)]
