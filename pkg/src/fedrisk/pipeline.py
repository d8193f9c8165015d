"""End-to-end glue: windows in, residuals, forecasts and scores out."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .anomaly import AnomalyReport, detect, residuals
from .data import CLOSE, RETURN, MinMaxScaler, TimeSeriesFrame, compute_features, window_starts
from .model import HybridForecaster
from .risk import RiskSeries


def window_weights(seq_len: int, taper: str = "hann") -> np.ndarray:
    """Weight of each in-window position when overlapping reconstructions are pooled.

    ``"hann"`` down-weights the window edges, where the truncated spectrum
    rings; ``"flat"`` is a plain mean.
    """
    if taper == "flat":
        return np.ones(seq_len)
    if taper == "hann":
        return np.hanning(seq_len + 2)[1:-1]
    raise ValueError(f"unknown taper {taper!r}")


def reconstruct(model: HybridForecaster, scaled: np.ndarray, batch_size: int = 64,
                taper: str = "hann") -> np.ndarray:
    """Per-row fitted close (scaled units), pooled over every window covering the row.

    Rows are covered by all stride-1 windows of length ``seq_len`` inside
    ``scaled``; each row needs at least one.
    """
    t = model.cfg.seq_len
    n = len(scaled)
    if n < t:
        raise ValueError(f"need at least seq_len={t} rows to reconstruct, got {n}")
    weights = window_weights(t, taper)
    starts = np.arange(n - t + 1)
    acc = np.zeros(n)
    cover = np.zeros(n)
    for i in range(0, len(starts), batch_size):
        s = starts[i:i + batch_size]
        windows = scaled[s[:, None] + np.arange(t)[None, :]]
        rec = model.predict(windows, batch_size=batch_size)["reconstruction"].reshape(len(s), t)
        for j, st in enumerate(s):
            acc[st:st + t] += rec[j] * weights
            cover[st:st + t] += weights
    return acc / cover


@dataclass
class DetectionResult:
    report: AnomalyReport
    fitted: np.ndarray  # unscaled fitted close per row
    actual: np.ndarray
    dates: list[str]


def _context(n_rows: int, start: int, stop: int | None, reach: int) -> tuple[int, int, int]:
    stop = n_rows if stop is None else stop
    if not 0 <= start < stop <= n_rows:
        raise ValueError(f"bad row range [{start}, {stop}) for {n_rows} rows")
    return max(0, start - reach), min(n_rows, stop + reach), stop


def detect_frame(model: HybridForecaster, scaler: MinMaxScaler, features: np.ndarray, dates,
                 alpha: float, mode: str = "global", window: int = 60,
                 allow_any_alpha: bool = False, start: int = 0, stop: int | None = None,
                 taper: str = "hann") -> DetectionResult:
    """Residuals ``|close - fitted close|`` in price units, thresholded.

    Only rows ``start:stop`` are scored and enter the threshold statistics;
    up to ``seq_len - 1`` rows on either side serve as context so every scored
    row is covered by the full set of windows.
    """
    lo, hi, stop = _context(len(features), start, stop, model.cfg.seq_len - 1)
    scaled = scaler.transform(features[lo:hi])
    fitted = scaler.inverse(reconstruct(model, scaled, taper=taper), column=CLOSE)
    fitted = fitted[start - lo:stop - lo]
    actual = features[start:stop, CLOSE]
    rep = detect(residuals(actual, fitted), alpha, mode, window, allow_any_alpha)
    rep.dates = [str(d) for d in np.asarray(dates, dtype="datetime64[D]")[start:stop]]
    return DetectionResult(rep, fitted, actual, rep.dates)


@dataclass
class ForecastSet:
    end_dates: list[str]
    forecast: np.ndarray     # (n, k) price units
    actual: np.ndarray       # (n, k)
    persistence: np.ndarray  # (n, k) last observed close repeated
    risk_score: np.ndarray   # (n,)
    horizon_vol: np.ndarray  # (n,)


def forecast_windows(model: HybridForecaster, scaler: MinMaxScaler, features: np.ndarray, dates,
                     stride: int = 1, start: int = 0, stop: int | None = None) -> ForecastSet:
    """Forecasts for every window whose horizon lies inside rows ``start:stop``.

    Inputs may reach back before ``start``; targets never leave the range.
    """
    t, k = model.cfg.seq_len, model.cfg.horizon
    lo, _, stop = _context(len(features), start, stop, t)
    first = max(lo, start - t)
    starts = first + window_starts(stop - first, t, k, stride)
    if len(starts) == 0:
        raise ValueError(f"need at least {t + k} rows for one forecast window, got {stop - first}")
    dates = np.asarray(dates, dtype="datetime64[D]")
    scaled = scaler.transform(features)
    idx = starts[:, None] + np.arange(t)[None, :]
    tidx = starts[:, None] + t + np.arange(k)[None, :]
    pred = model.predict(scaled[idx])
    actual = features[tidx, CLOSE]
    last = features[starts + t - 1, CLOSE]
    return ForecastSet(
        end_dates=[str(d) for d in dates[starts + t - 1]],
        forecast=scaler.inverse(pred["forecast"], column=CLOSE),
        actual=actual,
        persistence=np.repeat(last[:, None], k, axis=1),
        risk_score=pred["risk_score"],
        horizon_vol=features[tidx, RETURN].std(axis=1),
    )


def latest_forecast(model: HybridForecaster, scaler: MinMaxScaler, features: np.ndarray) -> np.ndarray:
    """Forecast (price units) from the most recent ``seq_len`` rows."""
    t = model.cfg.seq_len
    if len(features) < t:
        raise ValueError(f"need at least {t} rows, got {len(features)}")
    window = scaler.transform(features[-t:])[None]
    return scaler.inverse(model.predict(window)["forecast"][0], column=CLOSE)


def risk_series(fs: ForecastSet, cut: float, percentile: float) -> RiskSeries:
    labels = (fs.horizon_vol > cut).astype(float)
    return RiskSeries(fs.end_dates, fs.risk_score, labels,
                      f"horizon return std > {cut:.6g} (train p{percentile:g})")


def frame_features(frame: TimeSeriesFrame, log_return: bool = False, log_volume: bool = False):
    return compute_features(frame, log_return=log_return, log_volume=log_volume)
