import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fedrisk.data import (CLOSE, RETURN, VOLATILITY, MinMaxScaler, SynthConfig, TimeSeriesFrame,
                          compute_features, load_ohlcv, make_windows, read_truth,
                          synth_clean_close, synth_generate, write_truth)

HEADER = "date,open,high,low,close,volume\n"


def _write(tmp_path, body, name="d.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body)
    return path


def _frame(close, spread=1.0):
    close = np.asarray(close, dtype=float)
    dates = np.datetime64("2020-01-01") + np.arange(len(close))
    return TimeSeriesFrame(dates, close, close + spread, close - spread, close, np.full(len(close), 1e3))


def test_well_formed_file_unchanged(tmp_path):
    path = _write(tmp_path, "2020-01-02,10,11,9,10.5,100\n2020-01-03,10.5,12,10,11,200\n"
                            "2020-01-06,11,11.5,10.5,11.2,150\n")
    frame = load_ohlcv(path)
    assert len(frame) == 3
    assert frame.report.n_rejected == 0 and frame.report.interpolated == 0
    np.testing.assert_array_equal(frame.close, [10.5, 11, 11.2])


def test_missing_middle_close_is_interpolated(tmp_path):
    path = _write(tmp_path, "2020-01-02,100,101,99,100,1\n2020-01-03,104,111,99,,1\n"
                            "2020-01-06,110,111,109,110,1\n")
    frame = load_ohlcv(path)
    assert frame.close[1] == 105.0
    assert frame.report.interpolated == 1


def test_edge_gaps_are_filled(tmp_path):
    path = _write(tmp_path, "2020-01-02,,101,99,100,1\n2020-01-03,100,101,99,100,1\n"
                            "2020-01-06,100,101,99,100,\n")
    frame = load_ohlcv(path)
    assert frame.open[0] == 100 and frame.volume[2] == 1
    assert frame.report.edge_filled == 2


def test_inverted_high_low_rejected(tmp_path):
    path = _write(tmp_path, "2020-01-02,10,11,9,10,1\n2020-01-03,10,9,11,10,1\n"
                            "2020-01-06,10,11,9,10,1\n")
    frame = load_ohlcv(path)
    assert len(frame) == 2
    assert frame.report.n_rejected == 1
    assert frame.report.rejected[0][0] == "2020-01-03"


def test_sorting_and_duplicates(tmp_path):
    path = _write(tmp_path, "2020-01-06,10,11,9,10,1\n2020-01-02,10,11,9,10,1\n"
                            "2020-01-06,20,21,19,20,1\n")
    frame = load_ohlcv(path)
    assert [str(d) for d in frame.dates] == ["2020-01-02", "2020-01-06"]
    assert frame.close[1] == 10 and frame.report.duplicates == 1


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_ohlcv(tmp_path / "nope.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("date,open,close\n2020-01-01,1,1\n")
    with pytest.raises(ValueError, match="missing columns"):
        load_ohlcv(bad)
    with pytest.raises(ValueError, match="fewer than 2"):
        load_ohlcv(_write(tmp_path, "2020-01-02,10,11,9,10,1\n", "one.csv"))


def test_return_and_volatility_formulas():
    frame = TimeSeriesFrame(np.array(["2020-01-01", "2020-01-02", "2020-01-03"], dtype="datetime64[D]"),
                            [100, 100, 105], [100, 110, 106], [100, 100, 104], [100, 105, 105], [1, 1, 1])
    dates, feats = compute_features(frame)
    assert len(feats) == 2 and str(dates[0]) == "2020-01-02"
    assert feats[0, RETURN] == pytest.approx(0.05, abs=1e-15)
    assert feats[0, VOLATILITY] == pytest.approx(math.log(1.1) / (2 * math.sqrt(math.log(2))), rel=1e-14)
    assert feats[0, VOLATILITY] == pytest.approx(0.05724, abs=1e-5)
    flat = compute_features(_frame([100.0, 101.0], spread=0.0))[1]
    assert flat[0, VOLATILITY] == 0.0
    log_ret = compute_features(frame, log_return=True)[1]
    assert log_ret[0, RETURN] == pytest.approx(math.log(1.05))


def test_nonpositive_prices_rejected():
    frame = _frame([1.0, 2.0], spread=1.0)  # low reaches 0
    with pytest.raises(ValueError):
        compute_features(frame)


def test_features_are_causal():
    frame = _frame(100 + np.cumsum(np.random.default_rng(0).standard_normal(60)))
    full = compute_features(frame)[1]
    np.testing.assert_array_equal(compute_features(frame.slice(0, 40))[1], full[:39])


def test_window_count_single_split():
    feats = np.random.default_rng(0).random((400, 7))
    dates = np.arange(400).astype("datetime64[D]")
    w = make_windows(feats, dates, 256, 24, 1, ratios=(1.0,))
    assert len(w["train"].inputs) == 121
    assert w["train"].inputs.shape == (121, 256, 7) and w["train"].targets.shape == (121, 24)


def test_scaler_maps_and_extrapolates():
    sc = MinMaxScaler.fit(np.array([[2.0], [6.0], [3.0]]))
    assert sc.transform([[4.0]])[0, 0] == 0.5
    assert sc.transform([[0.0]])[0, 0] == -0.5


@given(arrays(np.float64, (12, 3), elements=st.floats(-1e6, 1e6)))
def test_scaler_round_trip(x):
    sc = MinMaxScaler.fit(x)
    back = sc.inverse(sc.transform(x))
    assert np.all(np.abs(back - x) <= 1e-12 * np.maximum(1.0, np.abs(x).max()))


def test_splits_are_chronological_and_scaled_on_train():
    n = 1000
    feats = np.column_stack([np.arange(n, dtype=float)] * 7)
    dates = np.arange(n).astype("datetime64[D]")
    w = make_windows(feats, dates, 32, 8, 1)
    train, val, test = w["train"], w["val"], w["test"]
    assert train.inputs.min() >= 0 and train.inputs.max() <= 1
    assert val.inputs.min() > 1  # beyond the training range, not clipped
    assert train.starts[-1] + 40 <= val.starts[0] and val.starts[-1] + 40 <= test.starts[0]
    raw = train.scaler.inverse(test.targets, column=CLOSE)
    expected = feats[test.starts[:, None] + 32 + np.arange(8), CLOSE]
    np.testing.assert_allclose(raw, expected, rtol=0, atol=1e-9)


def test_insufficient_rows_names_minimum():
    with pytest.raises(ValueError, match="at least"):
        make_windows(np.zeros((100, 7)), np.arange(100).astype("datetime64[D]"), 64, 8)


def test_synth_without_noise_is_deterministic_signal():
    cfg = SynthConfig(n_points=300, noise_sigma=0.0, anomaly_rate=0.0)
    frame, mask = synth_generate(cfg)
    np.testing.assert_allclose(frame.close, synth_clean_close(cfg), rtol=0, atol=1e-12)
    assert not mask.any()


def test_synth_repeatable_and_consistent():
    a, ma = synth_generate(SynthConfig(seed=3))
    b, mb = synth_generate(SynthConfig(seed=3))
    np.testing.assert_array_equal(a.close, b.close)
    np.testing.assert_array_equal(ma, mb)
    assert ma.sum() == 40
    assert np.all(a.low <= np.minimum(a.open, a.close)) and np.all(a.high >= np.maximum(a.open, a.close))
    assert np.all(a.volume >= 0)


def test_truth_round_trip(tmp_path):
    frame, mask = synth_generate(SynthConfig(n_points=200))
    write_truth(frame.dates, mask, tmp_path / "t.csv")
    dates, back = read_truth(tmp_path / "t.csv")
    np.testing.assert_array_equal(back, mask)
    assert (tmp_path / "t.csv").read_text().startswith("date,is_anomaly\n")
