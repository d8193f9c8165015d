"""Additive trend/seasonal split with a trailing moving average."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_WINDOW = 25


@dataclass(frozen=True)
class DecompositionResult:
    trend: np.ndarray
    seasonal: np.ndarray
    window: int


def _check(window: int) -> None:
    if int(window) != window or window < 1:
        raise ValueError(f"window must be a positive integer, got {window!r}")


def trailing_mean(x: np.ndarray, window: int, axis: int = -1) -> np.ndarray:
    """``T[t] = mean(x[t-window+1 .. t])`` with ``x[j] := x[0]`` for ``j < 0``."""
    _check(window)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[axis] == 0:
        raise ValueError("empty series")
    if window == 1:
        return x.copy()
    moved = np.moveaxis(x, axis, -1)
    pad = np.repeat(moved[..., :1], window - 1, axis=-1)
    padded = np.concatenate((pad, moved), axis=-1)
    out = sliding_window_view(padded, window, axis=-1).mean(axis=-1)
    return np.moveaxis(out, -1, axis)


def trailing_mean_adjoint(g: np.ndarray, window: int, axis: int = -1) -> np.ndarray:
    """Transpose of :func:`trailing_mean` as a linear map, applied to ``g``."""
    _check(window)
    if window == 1:
        return np.array(g, dtype=np.float64, copy=True)
    moved = np.moveaxis(np.asarray(g, dtype=np.float64), axis, -1)
    n = moved.shape[-1]
    # x[s] (s > 0) feeds outputs t = s .. s+window-1
    padded = np.concatenate((moved, np.zeros(moved.shape[:-1] + (window - 1,))), axis=-1)
    out = sliding_window_view(padded, window, axis=-1)[..., :n, :].sum(axis=-1)
    # x[0] also stands in for every padded sample: output t uses it window-t times
    counts = np.maximum(window - np.arange(n), 0).astype(np.float64)
    out[..., 0] = (moved * counts).sum(axis=-1)
    return np.moveaxis(out / window, -1, axis)


def decompose(x, window: int = DEFAULT_WINDOW) -> DecompositionResult:
    """Split a 1-D series into trailing-average trend and the remainder.

    The remainder carries both the periodic part and the noise; ``trend +
    seasonal`` reproduces ``x`` to rounding.
    """
    _check(window)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("decompose expects a 1-D series")
    if x.size == 0:
        raise ValueError("empty series")
    trend = trailing_mean(x, window)
    return DecompositionResult(trend=trend, seasonal=x - trend, window=int(window))
