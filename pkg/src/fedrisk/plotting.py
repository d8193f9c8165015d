"""Figures written straight to files; SVG output is byte-stable across runs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

TRAIN_COLOR = "tab:orange"
VAL_COLOR = "tab:blue"

_STABLE_RC = {"svg.hashsalt": "fedrisk", "svg.fonttype": "none", "path.simplify": False}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if path.suffix.lower() == ".svg" else None
    with matplotlib.rc_context(_STABLE_RC):
        fig.savefig(path, metadata=metadata)
    plt.close(fig)
    return path


def plot_loss_curves(epochs, train_loss, val_loss, path, best_epoch: int | None = None) -> Path:
    """Training (solid orange) and validation (dashed blue) loss per epoch."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(epochs, train_loss, color=TRAIN_COLOR, linestyle="-", label="train", gid="train-loss")
    ax.plot(epochs, val_loss, color=VAL_COLOR, linestyle="--", label="validation", gid="val-loss")
    if best_epoch is not None:
        ax.axvline(best_epoch, color="0.6", linewidth=0.8, linestyle=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def plot_anomalies(dates, actual, fitted, flags, path, truth=None) -> Path:
    """Close price, fitted close and flagged rows (optional true anomalies as rings)."""
    x = np.asarray(dates, dtype="datetime64[D]")
    flags = np.asarray(flags, dtype=bool)
    fig, ax = plt.subplots(figsize=(9.0, 3.6))
    ax.plot(x, actual, color="0.35", linewidth=0.8, label="close")
    ax.plot(x, fitted, color=VAL_COLOR, linewidth=0.8, label="fitted")
    ax.scatter(x[flags], np.asarray(actual)[flags], color="tab:red", s=14, zorder=3, label="flagged")
    if truth is not None:
        truth = np.asarray(truth, dtype=bool)
        ax.scatter(x[truth], np.asarray(actual)[truth], facecolors="none", edgecolors="k",
                   s=40, linewidths=0.8, zorder=4, label="injected")
    ax.set_ylabel("price")
    ax.legend(frameon=False, ncol=4, fontsize="small")
    fig.autofmt_xdate()
    fig.tight_layout()
    return _save(fig, path)


def plot_forecast(history_dates, history, future_dates, forecast, path, actual=None) -> Path:
    fig, ax = plt.subplots(figsize=(8.0, 3.6))
    ax.plot(np.asarray(history_dates, dtype="datetime64[D]"), history, color="0.35", label="history")
    fx = np.asarray(future_dates, dtype="datetime64[D]")
    ax.plot(fx, forecast, color=TRAIN_COLOR, label="forecast")
    if actual is not None:
        ax.plot(fx, actual, color="0.35", linestyle=":", label="actual")
    ax.set_ylabel("price")
    ax.legend(frameon=False)
    fig.autofmt_xdate()
    fig.tight_layout()
    return _save(fig, path)
