"""Residual-threshold anomaly detection and the latent KL regularizer."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor

DEFAULT_ALPHA = 2.5
DEFAULT_ROLLING_WINDOW = 60
MODES = ("global", "rolling")


@dataclass(frozen=True)
class ThresholdStats:
    mu_R: float
    sigma_R: float
    alpha: float
    theta: float


@dataclass
class AnomalyReport:
    residuals: np.ndarray
    stats: ThresholdStats
    flags: np.ndarray
    mode: str = "global"
    window: int | None = None
    thresholds: np.ndarray | None = None
    dates: list[str] | None = field(default=None)

    def to_dict(self) -> dict:
        out = {
            "alpha": self.stats.alpha,
            "mu_R": self.stats.mu_R,
            "sigma_R": self.stats.sigma_R,
            "theta": self.stats.theta,
            "flags": [bool(f) for f in self.flags],
            "residuals": [float(r) for r in self.residuals],
            "mode": self.mode,
        }
        if self.window is not None:
            out["window"] = self.window
        if self.dates is not None:
            out["dates"] = list(self.dates)
        return out

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "AnomalyReport":
        d = json.loads(Path(path).read_text())
        missing = {"alpha", "mu_R", "sigma_R", "theta", "flags", "residuals"} - d.keys()
        if missing:
            raise ValueError(f"{path}: anomaly report lacks {sorted(missing)}")
        stats = ThresholdStats(d["mu_R"], d["sigma_R"], d["alpha"], d["theta"])
        return cls(np.asarray(d["residuals"], dtype=np.float64), stats,
                   np.asarray(d["flags"], dtype=bool), d.get("mode", "global"),
                   d.get("window"), None, d.get("dates"))


def residuals(x, x_hat) -> np.ndarray:
    """Elementwise absolute error ``|x - x_hat|``."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    return np.abs(x - x_hat)


def _mean_std(view: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std along the last axis; constant rows give exactly (c, 0)."""
    lo, hi = view.min(axis=-1), view.max(axis=-1)
    mu = np.clip(view.mean(axis=-1), lo, hi)
    flat = lo == hi
    mu = np.where(flat, lo, mu)
    sd = np.sqrt(((view - mu[..., None]) ** 2).mean(axis=-1))
    return mu, np.where(flat, 0.0, sd)


def threshold_stats(r: np.ndarray, alpha: float) -> ThresholdStats:
    mu, sd = _mean_std(np.asarray(r, dtype=np.float64))
    mu, sd = float(mu), float(sd)
    return ThresholdStats(mu, sd, float(alpha), mu + alpha * sd)


def detect(res, alpha: float = DEFAULT_ALPHA, mode: str = "global",
           window: int = DEFAULT_ROLLING_WINDOW, allow_any_alpha: bool = False) -> AnomalyReport:
    """Flag residuals strictly above ``mean + alpha * std``.

    ``global`` uses one mean/std over the whole vector. ``rolling`` uses the
    trailing ``window`` residuals ending at each step (the current one
    included) and leaves the first ``window - 1`` steps unflagged; the
    reported stats are those of the last full window.
    """
    r = np.asarray(res, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("residuals must be a non-empty 1-D vector")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 2.0 <= alpha <= 3.0:
        if not allow_any_alpha:
            raise ValueError(f"alpha={alpha} outside [2, 3]; pass allow_any_alpha=True to override")
        warnings.warn(f"alpha={alpha} outside the usual [2, 3] range", stacklevel=2)
    if mode == "global":
        stats = threshold_stats(r, alpha)
        return AnomalyReport(r, stats, r > stats.theta, "global")
    if mode != "rolling":
        raise ValueError(f"mode must be one of {MODES}")
    if window < 1:
        raise ValueError("rolling window must be positive")
    n = r.size
    theta = np.full(n, np.inf)
    if n >= window:
        view = np.lib.stride_tricks.sliding_window_view(r, window)
        mu, sd = _mean_std(view)
        theta[window - 1:] = mu + alpha * sd
        stats = ThresholdStats(float(mu[-1]), float(sd[-1]), float(alpha), float(theta[-1]))
    else:
        stats = ThresholdStats(float("nan"), float("nan"), float(alpha), float("inf"))
    return AnomalyReport(r, stats, r > theta, "rolling", window, theta)


def kl_regularizer(mu, logvar) -> float:
    """Mean over steps and dims of ``KL(N(mu, exp(logvar)) || N(0, 1))``."""
    mu = np.asarray(mu, dtype=np.float64)
    logvar = np.asarray(logvar, dtype=np.float64)
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar must have equal shapes")
    if np.isnan(mu).any() or np.isnan(logvar).any():
        raise ValueError("NaN in latent parameters")
    # expm1 keeps exp(v) - 1 - v from cancelling below zero for small v
    return float(np.mean(0.5 * (np.expm1(logvar) - logvar + mu * mu)))


def kl_regularizer_tensor(mu: Tensor, logvar: Tensor) -> Tensor:
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar must have equal shapes")
    if np.isnan(mu.data).any() or np.isnan(logvar.data).any():
        raise ValueError("NaN in latent parameters")
    return ((logvar.exp() + mu * mu - 1.0 - logvar) * 0.5).mean()
