"""Numpy fallback for the compiled kernels, bit-identical output."""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1
_INV53 = 1.0 / 9007199254740992.0
_BLOCK = 65536


def uniform(key: int, counter: int) -> float:
    z = (key + (counter + 1) * 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return (z >> 11) * _INV53


def uniforms(key: int, counters: np.ndarray) -> np.ndarray:
    c = np.asarray(counters, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(key) + (c + np.uint64(1)) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    z ^= z >> np.uint64(31)
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def first_hit(keys: np.ndarray, thresholds: np.ndarray, counters: np.ndarray) -> int:
    counters = np.asarray(counters, dtype=np.int64)
    for lo in range(0, counters.shape[0], _BLOCK):
        block = counters[lo : lo + _BLOCK]
        hit = np.zeros(block.shape[0], dtype=bool)
        for key, thr in zip(keys, thresholds):
            if thr > 0.0:
                hit |= uniforms(int(key), block) < thr
        idx = np.flatnonzero(hit)
        if idx.size:
            return lo + int(idx[0])
    return -1


def first_below_range(key: int, start: int, stop: int, threshold: float) -> int:
    if threshold <= 0.0:
        return -1
    for lo in range(start, stop, _BLOCK):
        block = np.arange(lo, min(lo + _BLOCK, stop), dtype=np.int64)
        idx = np.flatnonzero(uniforms(key, block) < threshold)
        if idx.size:
            return int(block[idx[0]])
    return -1
