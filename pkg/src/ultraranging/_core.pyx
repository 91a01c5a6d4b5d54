# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics mirror ``_pycore`` exactly."""
import numpy as np

from libc.math cimport log, sqrt, cos, sin, INFINITY
from libc.stdint cimport uint64_t

cdef uint64_t GOLDEN_GAMMA = 0x9E3779B97F4A7C15ULL
cdef double TWO_PI = 6.283185307179586
cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def splitmix64(state):
    cdef uint64_t s = <uint64_t>(state & 0xFFFFFFFFFFFFFFFF)
    s += GOLDEN_GAMMA
    return s, _mix(s)


def gaussian_fill(seed, Py_ssize_t n):
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t state = <uint64_t>(seed & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t a, b
    cdef double u1, u2, r, theta
    cdef Py_ssize_t i = 0
    with nogil:
        while i < n:
            state += GOLDEN_GAMMA
            a = _mix(state)
            state += GOLDEN_GAMMA
            b = _mix(state)
            u1 = <double>((a >> 11) + 1) * INV_2_53
            u2 = <double>(b >> 11) * INV_2_53
            r = sqrt(-2.0 * log(u1))
            theta = TWO_PI * u2
            o[i] = r * cos(theta)
            if i + 1 < n:
                o[i + 1] = r * sin(theta)
            i += 2
    return out


def correlate_direct(buf, ref):
    cdef const double[::1] x = np.ascontiguousarray(buf, dtype=np.float64)
    cdef const double[::1] h = np.ascontiguousarray(ref, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], m = h.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, k, kmax
    cdef double acc
    with nogil:
        for i in range(n):
            kmax = m if i + m <= n else n - i
            acc = 0.0
            for k in range(kmax):
                acc = acc + x[i + k] * h[k]
            o[i] = acc
    return out


def scan_first_arrival(power, double threshold, Py_ssize_t window,
                       Py_ssize_t separation):
    cdef const double[::1] p = np.ascontiguousarray(power, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i, first = -1, start, end, crest, best = -1, second = -1
    cdef Py_ssize_t early, late
    cdef double left, right, v
    for i in range(n):
        if p[i] > threshold:
            first = i
            break
    if first < 0:
        return -1, -1

    start = first
    end = start + window if start + window < n else n
    crest = first
    while crest + 1 < n and p[crest + 1] >= p[crest]:
        crest += 1
    if crest >= end:
        start = crest - separation if crest - separation > first else first
        end = start + window if start + window < n else n

    for i in range(start, end):
        v = p[i]
        left = p[i - 1] if i > 0 else -INFINITY
        right = p[i + 1] if i + 1 < n else -INFINITY
        if v > left and v >= right:
            if best < 0 or v > p[best]:
                second = best
                best = i
            elif second < 0 or v > p[second]:
                second = i
    if best < 0:
        best = start
        for i in range(start, end):
            if p[i] > p[best]:
                best = i
        return first, best
    if second < 0:
        return first, best
    early = best if best < second else second
    late = second if best < second else best
    if late - early > separation:
        return first, early
    return first, best
