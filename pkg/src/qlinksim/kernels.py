"""Selects the compiled scanning kernels, falling back to numpy.

Set ``QLINKSIM_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

if os.environ.get("QLINKSIM_PURE_PYTHON"):
    from qlinksim import _kernels_py as _impl

    COMPILED = False
else:
    try:
        from qlinksim import _kernels as _impl

        COMPILED = True
    except ImportError:
        from qlinksim import _kernels_py as _impl

        COMPILED = False

import numpy as np

uniform = _impl.uniform
first_below_range = _impl.first_below_range


def uniforms(key: int, counters) -> np.ndarray:
    """Uniforms for a vector of counters under one key."""
    return _impl.uniforms(key, np.ascontiguousarray(counters, dtype=np.int64))


def first_hit(keys, thresholds, counters) -> int:
    """Index of the first counter where any (key, threshold) pair fires, or -1."""
    return _impl.first_hit(
        np.ascontiguousarray(keys, dtype=np.uint64),
        np.ascontiguousarray(thresholds, dtype=np.float64),
        np.ascontiguousarray(counters, dtype=np.int64),
    )

__all__ = ["COMPILED", "uniform", "uniforms", "first_hit", "first_below_range"]
