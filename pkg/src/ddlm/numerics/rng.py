"""Seeded, forkable random streams on a counter-based generator.

Streams wrap numpy's Philox4x64-10. A stream's key is a BLAKE2b digest of the
root seed and its fork path, so ``fork(label)`` is deterministic in
``(seed, label)`` and never consumes draws from the parent.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

ALGORITHM = "philox4x64-10+blake2b-fork"


def _key(seed: int, path: tuple[str, ...]) -> np.ndarray:
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF))
    for label in path:
        encoded = label.encode("utf-8")
        h.update(struct.pack("<I", len(encoded)))
        h.update(encoded)
    return np.frombuffer(h.digest(), dtype="<u8").astype(np.uint64)


class RandomStream:
    algorithm = ALGORITHM

    def __init__(self, seed: int, path: tuple[str, ...] = ()):
        if seed < 0:
            raise ValueError(f"seed must be non-negative, got {seed}")
        self.seed = int(seed)
        self.path = tuple(path)
        self._gen = np.random.Generator(np.random.Philox(key=_key(self.seed, self.path)))

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, path={'/'.join(self.path) or '<root>'})"

    def fork(self, *labels) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(str(x) for x in labels))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def truncated_normal(self, shape, std: float, bound: float = 2.0) -> np.ndarray:
        """Normal(0, std) draws, redrawing anything beyond ``bound`` std."""
        out = self._gen.standard_normal(shape)
        bad = np.abs(out) > bound
        while bad.any():
            out[bad] = self._gen.standard_normal(int(bad.sum()))
            bad = np.abs(out) > bound
        return out * std
