"""Deterministic point sampling.

Generator: SplitMix64.  State advances by the 64-bit golden-ratio
constant 0x9E3779B97F4A7C15; each output mixes the state with two
xor-shift-multiply rounds (0xBF58476D1CE4E5B9, 0x94D049BB133111EB) and a
final 31-bit shift.  A draw maps to [0, 1) through the top 53 bits:
u = (z >> 11) * 2^-53.

Points fill a coordinate box in row-major order: one draw per coordinate,
coordinates in declaration order, points in sequence.  Any implementation
of this scheme reproduces the sample set bit for bit; `splitmix64` test
vectors are pinned in the test suite.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(seed, count):
    """First `count` outputs of SplitMix64 seeded with `seed`, as python ints."""
    state = seed & _MASK
    out = []
    for _ in range(count):
        state = (state + _GAMMA) & _MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        z = z ^ (z >> 31)
        out.append(z)
    return out


def unit_stream(seed, count):
    """Deterministic doubles in [0, 1)."""
    return [(z >> 11) * (2.0 ** -53) for z in splitmix64(seed, count)]


def sample_box(seed, bounds, count):
    """Sample `count` points uniformly from a box, shape (count, dim).

    `bounds` is a sequence of (lo, hi) pairs in coordinate order.
    """
    dim = len(bounds)
    us = unit_stream(seed, count * dim)
    pts = np.empty((count, dim))
    k = 0
    for i in range(count):
        for j, (lo, hi) in enumerate(bounds):
            pts[i, j] = lo + us[k] * (hi - lo)
            k += 1
    return pts
