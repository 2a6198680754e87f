import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from svtime.errors import ConfigError, DataError
from svtime.imaging import default_period, detect_period, from_image, patch_layout, to_image


def dft_period_oracle(x):
    """Brute-force O(T^2) DFT scan, independent of numpy.fft."""
    T = len(x)
    mu = sum(x) / T
    best_f, best_mag = None, -1.0
    for f in range(1, T // 2 + 1):
        acc = sum((x[t] - mu) * cmath.exp(-2j * math.pi * f * t / T) for t in range(T))
        if abs(acc) > best_mag + 1e-9:
            best_f, best_mag = f, abs(acc)
    return min(max(round(T / best_f), 2), T // 2)


def test_detect_period_pure_sine():
    x = [math.sin(2 * math.pi * t / 24) for t in range(480)]
    assert dft_period_oracle(x) == 24
    assert detect_period(np.array(x)) == 24


def test_detect_period_dominant_amplitude():
    x = [math.sin(2 * math.pi * t / 96) + 0.1 * math.sin(2 * math.pi * t / 8) for t in range(960)]
    assert dft_period_oracle(x) == 96
    assert detect_period(np.array(x)) == 96


@given(p=st.integers(2, 40), reps=st.integers(4, 12), phase=st.floats(0, 6.28))
def test_detect_period_integer_period(p, reps, phase):
    t = np.arange(p * reps)
    assert detect_period(np.sin(2 * np.pi * t / p + phase) + 0.0) == p


def test_detect_period_constant_is_error():
    with pytest.raises(DataError, match="period"):
        detect_period(np.full(50, 3.0))


@pytest.mark.parametrize("freq, P", [("hourly", 24), ("Min15", 96), ("min10", 144), ("15min", 96)])
def test_default_period(freq, P):
    assert default_period(freq) == P


def test_to_image_examples():
    img = to_image([1, 2, 3, 4, 5, 6], 3)
    np.testing.assert_array_equal(img.values, [[1, 4], [2, 5], [3, 6]])
    assert img.remainder.size == 0
    img = to_image([9, 1, 2, 3, 4, 5, 6], 3)
    np.testing.assert_array_equal(img.values, [[1, 4], [2, 5], [3, 6]])
    np.testing.assert_array_equal(img.remainder, [9])
    with pytest.raises(DataError):
        to_image([1, 2], 3)


def test_from_image_examples():
    np.testing.assert_array_equal(from_image(np.array([[2], [3], [4]]), 3), [2, 3, 4])
    np.testing.assert_array_equal(from_image(np.array([[1, 4], [2, 5], [3, 6]]), 4), [1, 2, 3, 4])
    with pytest.raises(DataError):
        from_image(np.ones((3, 1)), 4)


@given(T=st.integers(1, 200), P=st.integers(1, 50), seed=st.integers(0, 1000))
def test_image_round_trip(T, P, seed):
    x = np.random.default_rng(seed).normal(size=T)
    if T < P:
        with pytest.raises(DataError):
            to_image(x, P)
        return
    img = to_image(x, P)
    N = T // P
    assert img.values.shape == (P, N)
    np.testing.assert_array_equal(np.concatenate([img.remainder, from_image(img.values, N * P)]), x)


@given(H=st.integers(1, 800), P=st.integers(1, 200))
def test_forecast_period_count_covers_horizon(H, P):
    M = -(-H // P)
    assert M >= 1 and M * P >= H and (M - 1) * P < H


def test_batched_image_matches_single():
    x = np.random.default_rng(1).normal(size=(4, 50))
    batch = to_image(x, 7)
    for i in range(4):
        np.testing.assert_array_equal(batch.values[i], to_image(x[i], 7).values)


def test_patch_layout_examples():
    assert patch_layout(7, 3).lengths == [2, 2, 3]
    assert patch_layout(96, 16).lengths == [6] * 16
    with pytest.raises(ConfigError):
        patch_layout(4, 5)
    with pytest.raises(ConfigError):
        patch_layout(4, 0)


@given(P=st.integers(1, 300), data=st.data())
def test_patch_layout_partition(P, data):
    K = data.draw(st.integers(1, P))
    lay = patch_layout(P, K)
    assert sum(lay.lengths) == P
    assert min(lay.lengths) >= 1
    assert lay.lengths[:-1] == [P // K] * (K - 1)
    assert list(lay.boundaries) == sorted(lay.boundaries)
    assert lay.boundaries[0] == 0 and lay.boundaries[-1] == P
