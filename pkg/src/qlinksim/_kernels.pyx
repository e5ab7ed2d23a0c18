# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled counter-based uniform generator and scanning kernels."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline double _u(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t z = key + (counter + 1) * GOLDEN
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    z = z ^ (z >> 31)
    return (z >> 11) * INV53


def uniform(uint64_t key, int64_t counter):
    """Uniform in [0, 1) for one (key, counter)."""
    return _u(key, <uint64_t>counter)


def uniforms(uint64_t key, cnp.int64_t[::1] counters):
    """Vector of uniforms, one per counter."""
    cdef Py_ssize_t i, n = counters.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _u(key, <uint64_t>counters[i])
    return out


cdef Py_ssize_t _first_hit(cnp.uint64_t[::1] keys, double[::1] thresholds,
                           cnp.int64_t[::1] counters) noexcept nogil:
    cdef Py_ssize_t i, j, n = counters.shape[0], m = keys.shape[0]
    cdef uint64_t c
    for i in range(n):
        c = <uint64_t>counters[i]
        for j in range(m):
            if _u(keys[j], c) < thresholds[j]:
                return i
    return -1


def first_hit(cnp.uint64_t[::1] keys, double[::1] thresholds, cnp.int64_t[::1] counters):
    """Index of the first counter where any key's uniform is below its threshold, or -1."""
    cdef Py_ssize_t r
    with nogil:
        r = _first_hit(keys, thresholds, counters)
    return r


cdef int64_t _first_below(uint64_t key, int64_t start, int64_t stop, double threshold) noexcept nogil:
    cdef int64_t c
    for c in range(start, stop):
        if _u(key, <uint64_t>c) < threshold:
            return c
    return -1


def first_below_range(uint64_t key, int64_t start, int64_t stop, double threshold):
    """First counter in [start, stop) whose uniform is below threshold, or -1."""
    cdef int64_t r
    if threshold <= 0.0:
        return -1
    with nogil:
        r = _first_below(key, start, stop, threshold)
    return r
