"""Pure-Python implementations of the hot kernels.

These are the reference semantics for the compiled ``_core`` extension; both
must agree bit-for-bit on :func:`gaussian_fill` and on the indices returned by
:func:`scan_first_arrival`.
"""
import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
TWO_PI = 6.283185307179586
INV_2_53 = 1.0 / 9007199254740992.0


def splitmix64(state):
    """Advance a splitmix64 state. Returns ``(new_state, output)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def gaussian_fill(seed, n):
    """Draw ``n`` standard normal samples from a splitmix64 stream.

    Box-Muller on consecutive output pairs ``(a, b)``:
    ``u1 = ((a >> 11) + 1) * 2**-53``, ``u2 = (b >> 11) * 2**-53``,
    emitting ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)``.
    """
    out = np.empty(n, dtype=np.float64)
    state = seed & MASK64
    i = 0
    while i < n:
        state, a = splitmix64(state)
        state, b = splitmix64(state)
        u1 = ((a >> 11) + 1) * INV_2_53
        u2 = (b >> 11) * INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = TWO_PI * u2
        out[i] = r * math.cos(theta)
        if i + 1 < n:
            out[i + 1] = r * math.sin(theta)
        i += 2
    return out


def correlate_direct(buf, ref):
    """Sliding dot product ``out[n] = sum_k buf[n+k] * ref[k]``, zero-padded tail."""
    buf = np.ascontiguousarray(buf, dtype=np.float64)
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    padded = np.concatenate([buf, np.zeros(len(ref) - 1)])
    return np.correlate(padded, ref, mode="valid")


def scan_first_arrival(power, threshold, window, separation):
    """First-crossing / two-maxima scan over a power series.

    Returns ``(first_crossing, chosen_index)``, both ``-1`` when nothing
    exceeds ``threshold``.
    """
    power = np.asarray(power, dtype=np.float64)
    n = len(power)
    above = np.flatnonzero(power > threshold)
    if len(above) == 0:
        return -1, -1
    first = int(above[0])

    start = first
    end = min(start + window, n)
    crest = first
    while crest + 1 < n and power[crest + 1] >= power[crest]:
        crest += 1
    if crest >= end:
        start = max(first, crest - separation)
        end = min(start + window, n)

    best = -1
    second = -1
    for i in range(start, end):
        p = power[i]
        left = power[i - 1] if i > 0 else -math.inf
        right = power[i + 1] if i + 1 < n else -math.inf
        if p > left and p >= right:
            if best < 0 or p > power[best]:
                second = best
                best = i
            elif second < 0 or p > power[second]:
                second = i
    if best < 0:
        best = start + int(np.argmax(power[start:end]))
        return first, best
    if second < 0:
        return first, best
    early, late = min(best, second), max(best, second)
    if late - early > separation:
        return first, early
    return first, best
