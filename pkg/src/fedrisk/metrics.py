"""Regression and detection metrics with explicit edge-case conventions."""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

TABLE_COLUMNS = ("MAE", "RMSE", "MAPE(%)", "Precision", "Recall", "F1", "R²", "AUC")


def _pair(y, y_hat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise ValueError(f"length mismatch: {y.size} targets vs {y_hat.size} predictions")
    if y.size == 0:
        raise ValueError("metrics need at least one value")
    return y, y_hat


def regression_metrics(y, y_hat) -> dict:
    """MAE, RMSE, MAPE in percent and the coefficient of determination.

    MAPE skips zero targets (counted in ``mape_skipped``). A constant target
    leaves R² undefined: it is NaN and ``r2_undefined`` is set.
    """
    y, y_hat = _pair(y, y_hat)
    err = y - y_hat
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err ** 2)))
    rmse = max(rmse, mae)  # rounding can put sqrt(mean sq) a hair under mean abs

    nonzero = y != 0
    skipped = int(y.size - nonzero.sum())
    if skipped:
        warnings.warn(f"MAPE skips {skipped} zero target(s)", RuntimeWarning, stacklevel=2)
    with np.errstate(over="ignore"):
        mape = float(np.mean(np.abs(err[nonzero] / y[nonzero])) * 100) if nonzero.any() else math.nan

    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2, undefined = math.nan, True
    else:
        r2, undefined = 1.0 - float(np.sum(err ** 2)) / ss_tot, False
    return {"mae": mae, "rmse": rmse, "mape_pct": mape, "r2": r2,
            "mape_skipped": skipped, "r2_undefined": undefined}


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    mean_rank = upper - (counts - 1) / 2.0
    return mean_rank[inverse]


def roc_auc(labels, scores) -> float:
    """Mann-Whitney AUC; a tied positive/negative pair counts one half.

    Returns NaN when only one class is present.
    """
    labels = np.asarray(labels).ravel().astype(int)
    scores = np.asarray(scores, dtype=float).ravel()
    if labels.shape != scores.shape:
        raise ValueError("labels and scores differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = _average_ranks(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def confusion(labels, flags) -> dict:
    labels = np.asarray(labels).ravel().astype(bool)
    flags = np.asarray(flags).ravel().astype(bool)
    if labels.shape != flags.shape:
        raise ValueError("labels and flags differ in length")
    return {"tp": int(np.sum(labels & flags)), "fp": int(np.sum(~labels & flags)),
            "fn": int(np.sum(labels & ~flags)), "tn": int(np.sum(~labels & ~flags))}


def classification_metrics(labels, flags=None, scores=None, threshold: float | None = None) -> dict:
    """Precision, recall, F1 and AUC.

    Flags come from ``flags`` directly or from ``scores > threshold``.
    Scores, when given, feed the AUC; otherwise the flags themselves do.
    Zero denominators give 0 for precision, recall and F1.
    """
    labels = np.asarray(labels).ravel()
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if flags is None:
        if scores is None or threshold is None:
            raise ValueError("pass flags, or scores together with a threshold")
        flags = np.asarray(scores, dtype=float) > threshold
    c = confusion(labels, flags)
    tp, fp, fn = c["tp"], c["fp"], c["fn"]
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    auc = roc_auc(labels, np.asarray(flags, dtype=float) if scores is None else scores)
    return {"precision": precision, "recall": recall, "f1": f1, "auc": auc,
            "auc_undefined": math.isnan(auc), **c}


def _json_number(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class EvalReport:
    mae: float = math.nan
    rmse: float = math.nan
    mape_pct: float = math.nan
    precision: float = math.nan
    recall: float = math.nan
    f1: float = math.nan
    r2: float = math.nan
    auc: float = math.nan
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    n: int = 0
    notes: list[str] = field(default_factory=list)

    @classmethod
    def build(cls, regression: dict | None = None, classification: dict | None = None,
              n: int = 0) -> "EvalReport":
        rep = cls(n=n)
        if regression:
            for key in ("mae", "rmse", "mape_pct", "r2"):
                setattr(rep, key, regression[key])
            if regression.get("r2_undefined"):
                rep.notes.append("r2 undefined: constant target")
            if regression.get("mape_skipped"):
                rep.notes.append(f"mape skipped {regression['mape_skipped']} zero target(s)")
        if classification:
            for key in ("precision", "recall", "f1", "auc", "tp", "fp", "fn", "tn"):
                setattr(rep, key, classification[key])
            if classification.get("auc_undefined"):
                rep.notes.append("auc undefined: single-class labels")
        return rep

    def table_row(self) -> list[float]:
        return [self.mae, self.rmse, self.mape_pct, self.precision, self.recall, self.f1,
                self.r2, self.auc]

    def to_dict(self) -> dict:
        return {k: _json_number(v) for k, v in asdict(self).items()}

    def to_json(self) -> str:
        """Stable text: sorted keys, shortest round-trip floats, NaN as null."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        return cls(**{k: (math.nan if v is None else v) for k, v in raw.items()})

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        w.writerow(["" if math.isnan(v) else repr(float(v)) for v in self.table_row()])
        return buf.getvalue()
