import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedrisk.anomaly import AnomalyReport, detect, kl_regularizer, residuals

resid = arrays(np.float64, st.integers(1, 80), elements=st.floats(0, 1e3))


def test_residual_examples():
    np.testing.assert_array_equal(residuals([1.0, 2.0], [1.0, 2.0]), [0, 0])
    np.testing.assert_array_equal(residuals([1.0, 2.0], [2.0, 0.0]), [1, 2])
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(30), rng.standard_normal(30)
    np.testing.assert_array_equal(residuals(x, y), [abs(a - b) for a, b in zip(x, y)])
    with pytest.raises(ValueError):
        residuals([1.0], [1.0, 2.0])


@pytest.mark.parametrize("c", [0.0, 0.1, 3.7, 1e6])
@pytest.mark.parametrize("alpha", [2.0, 2.5, 3.0])
def test_constant_residuals_never_flag(c, alpha):
    rep = detect(np.full(17, c), alpha)
    assert rep.stats.sigma_R == 0.0
    assert rep.stats.theta == c
    assert not rep.flags.any()


def test_single_spike_by_hand():
    rep = detect([1.0] * 9 + [10.0], alpha=2.0)
    assert rep.stats.mu_R == pytest.approx(1.9)
    assert rep.stats.sigma_R == pytest.approx(2.7)
    assert rep.stats.theta == pytest.approx(7.3)
    assert np.flatnonzero(rep.flags).tolist() == [9]


def test_alpha_range_is_enforced_unless_overridden():
    with pytest.raises(ValueError):
        detect([1.0, 2.0], alpha=1.5)
    with pytest.warns(UserWarning):
        rep = detect([1.0, 2.0], alpha=1.5, allow_any_alpha=True)
    assert rep.stats.alpha == 1.5
    with pytest.raises(ValueError):
        detect([1.0], alpha=0.0, allow_any_alpha=True)


def test_empty_and_bad_mode():
    with pytest.raises(ValueError):
        detect([])
    with pytest.raises(ValueError):
        detect([1.0, 2.0], mode="median")


@given(resid, st.floats(2, 3))
def test_global_flags_follow_threshold(r, alpha):
    rep = detect(r, alpha)
    assert rep.stats.theta == rep.stats.mu_R + alpha * rep.stats.sigma_R
    np.testing.assert_array_equal(rep.flags, r > rep.stats.theta)


@given(resid, st.integers(-20, 20))
def test_flags_invariant_to_power_of_two_scaling(r, k):
    a = detect(r, 2.5).flags
    np.testing.assert_array_equal(a, detect(r * 2.0 ** k, 2.5).flags)


@given(resid, st.floats(0, 1e3))
def test_flags_invariant_to_shift_away_from_ties(r, c):
    rep = detect(r, 2.5)
    shifted = detect(r + c, 2.5)
    clear = np.abs(r - rep.stats.theta) > 1e-9 * (1 + np.abs(r).max() + c)
    np.testing.assert_array_equal(rep.flags[clear], shifted.flags[clear])


@given(resid, st.floats(2, 3))
def test_alpha_monotone(r, alpha):
    strict = detect(r, 3.0).flags
    loose = detect(r, alpha).flags
    assert not np.any(strict & ~loose)


@given(resid, st.integers(1, 30))
def test_rolling_prefix_matches_global(r, w):
    assume(len(r) >= w)
    rolling = detect(r, 2.5, mode="rolling", window=w)
    assert not rolling.flags[:w - 1].any()
    for end in range(w, len(r) + 1):
        prefix = r[end - w:end]
        assert rolling.flags[end - 1] == detect(prefix, 2.5).flags[-1]


def test_rolling_shorter_than_window_flags_nothing():
    rep = detect([1.0, 50.0, 1.0], 2.5, mode="rolling", window=10)
    assert not rep.flags.any()


def test_report_json_round_trip(tmp_path):
    rep = detect([1.0] * 9 + [10.0], 2.0)
    rep.dates = [f"2020-01-{d:02d}" for d in range(1, 11)]
    rep.to_json(tmp_path / "a.json")
    raw = json.loads((tmp_path / "a.json").read_text())
    assert {"alpha", "mu_R", "sigma_R", "theta", "flags", "residuals"} <= raw.keys()
    back = AnomalyReport.from_json(tmp_path / "a.json")
    np.testing.assert_array_equal(back.flags, rep.flags)
    assert back.stats == rep.stats


# -- KL ---------------------------------------------------------------------------------

def test_kl_closed_form_examples():
    assert kl_regularizer(0.0, 0.0) == 0.0
    assert kl_regularizer(1.0, 0.0) == 0.5
    assert kl_regularizer(0.0, 1.0) == pytest.approx(0.5 * (math.e - 2), abs=1e-12)


def test_kl_rejects_nan_and_shape_mismatch():
    with pytest.raises(ValueError):
        kl_regularizer([np.nan], [0.0])
    with pytest.raises(ValueError):
        kl_regularizer([0.0, 1.0], [0.0])


@given(arrays(np.float64, 6, elements=st.floats(-5, 5)), arrays(np.float64, 6, elements=st.floats(-5, 5)))
def test_kl_nonnegative_and_zero_only_at_standard_normal(mu, logvar):
    kl = kl_regularizer(mu, logvar)
    assert kl >= 0
    if kl == 0:  # tiny log-variances underflow to zero divergence
        assert np.all(np.abs(mu) < 1e-150) and np.all(np.abs(logvar) < 1e-7)
    if np.all(mu == 0) and np.all(logvar == 0):
        assert kl == 0
