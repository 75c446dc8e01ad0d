"""Deterministic sampling: generator test vectors and box behavior."""

import numpy as np

from rmapcheck.sampling import sample_box, splitmix64, unit_stream

# Reference outputs of SplitMix64 for seed 0 (widely published vectors).
SEED0_FIRST = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_splitmix64_seed0_vectors():
    assert splitmix64(0, 3) == SEED0_FIRST


def test_splitmix64_seed_shift_property():
    # seeding with the golden-ratio increment drops the first output
    assert splitmix64(0x9E3779B97F4A7C15, 2) == SEED0_FIRST[1:]


def test_splitmix64_64bit_wraparound():
    out = splitmix64((1 << 64) - 1, 2)
    assert all(0 <= v < (1 << 64) for v in out)
    assert splitmix64((1 << 64) - 1, 2) == splitmix64(-1, 2)


def test_unit_stream_in_range_and_deterministic():
    us = unit_stream(1234, 1000)
    assert all(0.0 <= u < 1.0 for u in us)
    assert us == unit_stream(1234, 1000)


def test_sample_box_layout():
    pts = sample_box(42, [(0.0, 1.0), (10.0, 20.0)], 5)
    assert pts.shape == (5, 2)
    us = unit_stream(42, 10)
    # row-major: one draw per coordinate, coordinates in order
    assert pts[0, 0] == us[0]
    assert pts[0, 1] == 10.0 + us[1] * 10.0
    assert pts[1, 0] == us[2]


def test_sample_box_bounds_respected():
    pts = sample_box(7, [(-2.0, -1.0), (5.0, 5.5), (0.0, 0.1)], 200)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    assert np.all(lo >= [-2.0, 5.0, 0.0])
    assert np.all(hi < [-1.0, 5.5, 0.1])


def test_different_seeds_differ():
    a = sample_box(1, [(0.0, 1.0)], 8)
    b = sample_box(2, [(0.0, 1.0)], 8)
    assert not np.array_equal(a, b)
