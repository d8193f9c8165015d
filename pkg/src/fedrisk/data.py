"""OHLCV ingestion, cleaning, feature construction, scaling, windowing and synthesis."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .seeding import make_rng

log = logging.getLogger(__name__)

CSV_COLUMNS = ["date", "open", "high", "low", "close", "volume"]
TRUTH_COLUMNS = ["date", "is_anomaly"]
FEATURE_NAMES = ["open", "high", "low", "close", "volume", "return", "volatility"]
CLOSE = 3
RETURN = 5
VOLATILITY = 6
PARKINSON_SCALE = 1.0 / (2.0 * np.sqrt(np.log(2.0)))


@dataclass
class CleaningReport:
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (date, reason)
    interpolated: int = 0
    edge_filled: int = 0
    duplicates: int = 0

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


@dataclass
class TimeSeriesFrame:
    dates: np.ndarray  # datetime64[D], strictly increasing
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    report: CleaningReport = field(default_factory=CleaningReport)

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        for name in CSV_COLUMNS[1:]:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = len(self.dates)
        if any(len(getattr(self, c)) != n for c in CSV_COLUMNS[1:]):
            raise ValueError("all columns must have the same length")
        if n > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def date_strings(self) -> list[str]:
        return [str(d) for d in self.dates]

    def slice(self, start: int, stop: int | None = None) -> "TimeSeriesFrame":
        s = slice(start, stop)
        return TimeSeriesFrame(self.dates[s], self.open[s], self.high[s], self.low[s],
                               self.close[s], self.volume[s])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": self.date_strings, "open": self.open, "high": self.high,
                             "low": self.low, "close": self.close, "volume": self.volume})

    def to_csv(self, path: str | Path) -> None:
        write_csv(self.to_frame(), path)


def write_csv(df: pd.DataFrame, path: str | Path) -> None:
    # repr-precision floats so a reload is bit exact
    df.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")


def _ohlc_violation(o, h, l, c, v) -> str | None:
    if not (np.isfinite([o, h, l, c, v]).all()):
        return "non-finite value"
    if h < l:
        return "high < low"
    if l > min(o, c):
        return "low above open/close"
    if max(o, c) > h:
        return "high below open/close"
    if v < 0:
        return "negative volume"
    return None


def load_ohlcv(path: str | Path) -> TimeSeriesFrame:
    """Read ``date,open,high,low,close,volume`` and clean it.

    Rows are sorted by date. Duplicate dates keep the first occurrence.
    Complete rows that break ``low <= open, close <= high`` or have negative
    volume are rejected. Missing interior numeric cells are linearly
    interpolated, leading/trailing gaps are back/forward filled, and filled
    rows are validated again.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=True)
    except FileNotFoundError:
        raise FileNotFoundError(f"cannot read {path}: no such file") from None
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ValueError(f"cannot read {path}: {exc}") from None
    raw.columns = [c.strip().lower() for c in raw.columns]
    missing = [c for c in CSV_COLUMNS if c not in raw.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}; expected header {','.join(CSV_COLUMNS)}")
    report = CleaningReport()
    df = pd.DataFrame({"date": pd.to_datetime(raw["date"].str.strip(), format="ISO8601", errors="coerce")})
    for c in CSV_COLUMNS[1:]:
        df[c] = pd.to_numeric(raw[c], errors="coerce")
    bad_date = df["date"].isna()
    for d in raw.loc[bad_date, "date"]:
        report.rejected.append((str(d), "unparseable date"))
    df = df[~bad_date].sort_values("date", kind="mergesort")
    dup = df["date"].duplicated(keep="first")
    report.duplicates = int(dup.sum())
    for d in df.loc[dup, "date"]:
        report.rejected.append((str(d.date()), "duplicate date"))
    df = df[~dup].reset_index(drop=True)

    def reject_inconsistent(frame: pd.DataFrame, only_complete: bool) -> pd.DataFrame:
        keep = np.ones(len(frame), dtype=bool)
        vals = frame[CSV_COLUMNS[1:]].to_numpy()
        for i, row in enumerate(vals):
            if only_complete and np.isnan(row).any():
                continue
            reason = _ohlc_violation(*row)
            if reason:
                keep[i] = False
                report.rejected.append((str(frame["date"].iloc[i].date()), reason))
        return frame[keep].reset_index(drop=True)

    df = reject_inconsistent(df, only_complete=True)
    numeric = df[CSV_COLUMNS[1:]]
    holes = numeric.isna()
    if holes.any().any():
        interior = numeric.interpolate(method="linear", limit_area="inside")
        report.interpolated = int((holes & interior.notna()).to_numpy().sum())
        filled = interior.ffill().bfill()
        report.edge_filled = int((interior.isna() & filled.notna()).to_numpy().sum())
        df[CSV_COLUMNS[1:]] = filled
        df = reject_inconsistent(df, only_complete=False)
    if len(df) < 2:
        raise ValueError(f"{path}: fewer than 2 valid rows after cleaning")
    if report.n_rejected:
        log.warning("%s: rejected %d rows", path, report.n_rejected)
    return TimeSeriesFrame(df["date"].to_numpy().astype("datetime64[D]"), df["open"], df["high"],
                           df["low"], df["close"], df["volume"], report)


def compute_features(frame: TimeSeriesFrame, log_return: bool = False,
                     log_volume: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-step vector ``[open, high, low, close, volume, return, volatility]``.

    ``return`` is the simple close-to-close return (log return with
    ``log_return``) and ``volatility`` the Parkinson estimate
    ``ln(high/low) / (2 sqrt(ln 2))``. The first row has no return and is
    dropped. Returns ``(dates, features)``.
    """
    if len(frame) < 2:
        raise ValueError("need at least 2 rows to compute returns")
    if (frame.high <= 0).any() or (frame.low <= 0).any():
        raise ValueError("volatility needs strictly positive high and low prices")
    close = frame.close
    if log_return:
        ret = np.log(close[1:] / close[:-1])
    else:
        ret = (close[1:] - close[:-1]) / close[:-1]
    vol = np.log(frame.high / frame.low) * PARKINSON_SCALE
    volume = np.log1p(frame.volume) if log_volume else frame.volume
    feats = np.column_stack([frame.open[1:], frame.high[1:], frame.low[1:], close[1:],
                             volume[1:], ret, vol[1:]])
    return frame.dates[1:], feats


@dataclass
class MinMaxScaler:
    minimum: np.ndarray
    maximum: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "MinMaxScaler":
        x = np.asarray(x, dtype=np.float64)
        return cls(x.min(axis=0), x.max(axis=0))

    @property
    def span(self) -> np.ndarray:
        span = self.maximum - self.minimum
        return np.where(span > 0, span, 1.0)

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.minimum) / self.span

    def inverse(self, z, column: int | None = None) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if column is None:
            return z * self.span + self.minimum
        return z * self.span[column] + self.minimum[column]

    def to_dict(self) -> dict:
        return {"minimum": self.minimum.tolist(), "maximum": self.maximum.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(np.asarray(d["minimum"], dtype=np.float64), np.asarray(d["maximum"], dtype=np.float64))


@dataclass
class WindowBatch:
    inputs: np.ndarray       # (n, T, F) scaled
    targets: np.ndarray      # (n, k) scaled close
    scaler: MinMaxScaler
    split: str
    starts: np.ndarray       # row index (into the feature matrix) of each window's first input step
    end_dates: list[str]     # date of each window's last input step
    horizon_vol: np.ndarray  # std of raw returns over each window's horizon

    def __len__(self) -> int:
        return len(self.inputs)

    @property
    def last_close(self) -> np.ndarray:
        return self.inputs[:, -1, CLOSE]


SPLITS = ("train", "val", "test")


def split_bounds(n_rows: int, ratios: Sequence[float]) -> list[tuple[int, int]]:
    ratios = [float(r) for r in ratios]
    if not ratios or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must be positive and sum to 1")
    cuts = [0]
    acc = 0.0
    for r in ratios[:-1]:
        acc += r
        cuts.append(int(np.floor(acc * n_rows + 1e-9)))
    cuts.append(n_rows)
    return list(zip(cuts[:-1], cuts[1:]))


def window_starts(n_rows: int, seq_len: int, horizon: int, stride: int = 1) -> np.ndarray:
    return np.arange(0, n_rows - seq_len - horizon + 1, stride)


def make_windows(features: np.ndarray, dates, seq_len: int = 256, horizon: int = 24, stride: int = 1,
                 ratios: Sequence[float] = (0.7, 0.15, 0.15), target_index: int = CLOSE,
                 scaler: MinMaxScaler | None = None) -> dict[str, WindowBatch]:
    """Chronological split into ``train/val/test`` windows.

    The scaler is fit on the training rows only (unless given) and applied
    to every split without clipping. Windows never cross a split boundary.
    A single ratio ``(1.0,)`` yields one ``train`` split.
    """
    features = np.asarray(features, dtype=np.float64)
    dates = np.asarray(dates, dtype="datetime64[D]")
    if stride < 1:
        raise ValueError("stride must be positive")
    bounds = split_bounds(len(features), ratios)
    need = seq_len + horizon
    short = [(SPLITS[i], b - a) for i, (a, b) in enumerate(bounds) if b - a < need]
    if short:
        min_rows = int(np.ceil(need / min(ratios)))
        raise ValueError(f"insufficient data: each split needs at least {need} rows "
                         f"(seq_len {seq_len} + horizon {horizon}), so at least {min_rows} rows "
                         f"in total; got {len(features)} (short: {short})")
    if scaler is None:
        a, b = bounds[0]
        scaler = MinMaxScaler.fit(features[a:b])
    scaled = scaler.transform(features)
    out = {}
    for name, (a, b) in zip(SPLITS, bounds):
        starts = a + window_starts(b - a, seq_len, horizon, stride)
        idx = starts[:, None] + np.arange(seq_len)[None, :]
        tidx = starts[:, None] + seq_len + np.arange(horizon)[None, :]
        out[name] = WindowBatch(
            inputs=scaled[idx],
            targets=scaled[tidx, target_index],
            scaler=scaler,
            split=name,
            starts=starts,
            end_dates=[str(d) for d in dates[starts + seq_len - 1]],
            horizon_vol=features[tidx, RETURN].std(axis=1),
        )
    return out


# -- synthetic series -------------------------------------------------------------------

@dataclass
class SynthConfig:
    n_points: int = 4000
    start_date: str = "2010-01-04"
    level: float = 100.0
    trend_slope: float = 0.005
    sinusoids: list = field(default_factory=lambda: [[40.0, 4.0, 0.0], [16.0, 2.0, 1.0]])
    noise_sigma: float = 0.5
    anomaly_rate: float = 0.01
    anomaly_magnitude: float = 3.0
    intraday_range: float = 0.3
    base_volume: float = 1.0e6
    seed: int = 7

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")
        if self.noise_sigma < 0 or self.intraday_range < 0:
            raise ValueError("noise_sigma and intraday_range must be non-negative")
        if not 0.0 <= self.anomaly_rate <= 1.0:
            raise ValueError("anomaly_rate must lie in [0, 1]")
        for s in self.sinusoids:
            if len(s) != 3 or s[0] <= 0:
                raise ValueError("each sinusoid is [period > 0, amplitude, phase]")


def synth_clean_close(cfg: SynthConfig) -> np.ndarray:
    t = np.arange(cfg.n_points, dtype=np.float64)
    close = cfg.level + cfg.trend_slope * t
    for period, amp, phase in cfg.sinusoids:
        close = close + amp * np.sin(2.0 * np.pi * t / period + phase)
    return close


def synth_generate(cfg: SynthConfig) -> tuple[TimeSeriesFrame, np.ndarray]:
    """Trend plus sinusoids plus Gaussian noise, with additive spikes.

    Exactly ``round(anomaly_rate * n_points)`` distinct positions receive a
    spike of size ``anomaly_magnitude`` with random sign. Opens follow the
    previous clean close; highs and lows wrap open/close by a half-normal
    margin. Returns the frame and the boolean anomaly mask.
    """
    rng = make_rng(cfg.seed)
    n = cfg.n_points
    clean = synth_clean_close(cfg)
    close = clean + cfg.noise_sigma * rng.standard_normal(n)
    n_anom = int(round(cfg.anomaly_rate * n))
    mask = np.zeros(n, dtype=bool)
    if n_anom:
        pos = rng.choice(n, size=n_anom, replace=False)
        mask[pos] = True
        signs = rng.choice([-1.0, 1.0], size=n_anom)
        close[pos] += signs * cfg.anomaly_magnitude
    opens = np.empty(n)
    opens[0] = clean[0]
    opens[1:] = clean[:-1] + 0.5 * cfg.noise_sigma * rng.standard_normal(n - 1)
    high = np.maximum(opens, close) + np.abs(rng.normal(0.0, cfg.intraday_range, n))
    low = np.minimum(opens, close) - np.abs(rng.normal(0.0, cfg.intraday_range, n))
    volume = np.round(cfg.base_volume * np.exp(0.2 * rng.standard_normal(n)))
    if (low <= 0).any():
        raise ValueError("synthetic prices went non-positive; raise the level")
    dates = pd.bdate_range(cfg.start_date, periods=n).to_numpy().astype("datetime64[D]")
    return TimeSeriesFrame(dates, opens, high, low, close, volume), mask


def write_truth(dates, mask, path: str | Path) -> None:
    df = pd.DataFrame({"date": [str(d) for d in np.asarray(dates, dtype="datetime64[D]")],
                       "is_anomaly": np.asarray(mask, dtype=int)})
    df.to_csv(path, index=False, lineterminator="\n")


def read_truth(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"cannot read {path}: no such file")
    df = pd.read_csv(path, dtype={"date": str})
    if list(df.columns) != TRUTH_COLUMNS:
        raise ValueError(f"{path}: expected header {','.join(TRUTH_COLUMNS)}")
    return df["date"].to_numpy().astype("datetime64[D]"), df["is_anomaly"].to_numpy().astype(bool)
