"""Seeded random substreams.

Every stochastic component draws from a named substream derived from one
root seed. Most draws are counter-indexed: the uniform for an event is a
pure function of (seed, stream name, index), so skipping events never
shifts later draws.
"""
from __future__ import annotations

import hashlib

import numpy as np

from qlinksim import kernels


def stream_key(seed: int, name: str) -> int:
    """64-bit key for a named substream of ``seed``."""
    h = hashlib.blake2b(f"{int(seed)}/{name}".encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


class Streams:
    """Named counter-based substreams under one root seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._keys: dict[str, int] = {}

    def key(self, name: str) -> int:
        k = self._keys.get(name)
        if k is None:
            k = self._keys[name] = stream_key(self.seed, name)
        return k

    def u(self, name: str, index: int) -> float:
        """Uniform in [0, 1) for event ``index`` of stream ``name``."""
        return kernels.uniform(self.key(name), int(index))

    def generator(self, name: str) -> np.random.Generator:
        """Sequential numpy generator for a named substream."""
        return np.random.default_rng(np.random.SeedSequence([self.seed, stream_key(0, name)]))


class CounterUniform:
    """Adapter exposing ``random()`` over a (key, base) counter window.

    Lets samplers written against ``Generator.random`` consume
    counter-indexed uniforms.
    """

    def __init__(self, streams: Streams, name: str, base: int):
        self._key = streams.key(name)
        self._next = int(base)

    def random(self) -> float:
        v = kernels.uniform(self._key, self._next)
        self._next += 1
        return v
