import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedrisk.decomposition import decompose, trailing_mean, trailing_mean_adjoint


def test_constant_series():
    res = decompose([5.0, 5, 5, 5], 3)
    np.testing.assert_array_equal(res.trend, [5, 5, 5, 5])
    np.testing.assert_array_equal(res.seasonal, [0, 0, 0, 0])


def test_unit_window_is_identity():
    x = np.array([3.0, -1.0, 2.5])
    res = decompose(x, 1)
    np.testing.assert_array_equal(res.trend, x)
    np.testing.assert_array_equal(res.seasonal, 0)


def test_trailing_mean_by_hand():
    res = decompose([1.0, 2, 3, 4], 2)
    np.testing.assert_allclose(res.trend, [1, 1.5, 2.5, 3.5])
    np.testing.assert_allclose(res.seasonal, [0, 0.5, 0.5, 0.5])
    assert res.window == 2


@pytest.mark.parametrize("bad", [0, -3])
def test_bad_window(bad):
    with pytest.raises(ValueError):
        decompose([1.0, 2.0], bad)


def test_empty_series():
    with pytest.raises(ValueError):
        decompose([], 3)


@given(arrays(np.float64, st.integers(1, 300), elements=st.floats(-1e6, 1e6)), st.integers(1, 60))
def test_additivity(x, w):
    res = decompose(x, w)
    assert res.trend.shape == res.seasonal.shape == x.shape
    assert np.max(np.abs(res.trend + res.seasonal - x)) <= 1e-12 * max(1.0, np.abs(x).max())


@given(st.floats(-5, 5), st.floats(-100, 100), st.integers(1, 30))
def test_ramp_seasonal_is_constant_after_edge(slope, offset, w):
    x = offset + slope * np.arange(80)
    s = decompose(x, w).seasonal[w - 1:]
    np.testing.assert_allclose(s, slope * (w - 1) / 2, atol=1e-9)


@pytest.mark.parametrize("period", [4, 10, 25])
def test_full_period_average_of_sinusoid_vanishes(period):
    x = np.sin(2 * np.pi * np.arange(200) / period + 0.3)
    assert np.max(np.abs(decompose(x, period).trend[period - 1:])) < 1e-9


def test_no_look_ahead():
    x = np.random.default_rng(0).standard_normal(50)
    full = decompose(x, 7).trend
    np.testing.assert_array_equal(decompose(x[:30], 7).trend, full[:30])


def test_adjoint_matches_explicit_matrix():
    n, w = 9, 4
    mat = np.stack([trailing_mean(e, w) for e in np.eye(n)], axis=1)
    g = np.random.default_rng(1).standard_normal(n)
    np.testing.assert_allclose(trailing_mean_adjoint(g, w), mat.T @ g, atol=1e-14)
