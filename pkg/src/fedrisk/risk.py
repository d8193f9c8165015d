"""Risk-score head and the joint training objective."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .autograd import Linear, Module, Tensor, concat, gelu
from .anomaly import kl_regularizer_tensor

RISK_MODES = ("classification", "regression")


@dataclass
class RiskConfig:
    hidden: tuple[int, ...] = (32,)
    aux_dim: int = 2
    lambda1: float = 0.5
    lambda2: float = 0.5
    beta: float = 0.01
    risk_mode: str = "classification"
    label_percentile: float = 90.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.lambda1 < 0 or self.lambda2 < 0 or self.beta < 0:
            raise ValueError("loss weights lambda1, lambda2 and beta must be non-negative")
        if self.risk_mode not in RISK_MODES:
            raise ValueError(f"risk_mode must be one of {RISK_MODES}")
        if self.aux_dim < 0:
            raise ValueError("aux_dim must be non-negative")
        if not 0.0 < self.label_percentile < 100.0:
            raise ValueError("label_percentile must lie in (0, 100)")


class RiskHead(Module):
    """MLP over ``[mean-pooled latent || auxiliary indicators]``."""

    def __init__(self, latent_dim: int, cfg: RiskConfig, rng: np.random.Generator):
        self.latent_dim = latent_dim
        self.aux_dim = cfg.aux_dim
        self.mode = cfg.risk_mode
        sizes = [latent_dim + cfg.aux_dim, *cfg.hidden, 1]
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, latent: Tensor, aux: Tensor | np.ndarray | None) -> Tensor:
        """``latent``: (B, T, latent_dim); ``aux``: (B, aux_dim). Returns (B,)."""
        if latent.shape[-1] != self.latent_dim:
            raise ValueError(f"latent width {latent.shape[-1]} != {self.latent_dim}")
        pooled = latent.mean(axis=1)
        if self.aux_dim:
            if aux is None:
                raise ValueError("risk head expects auxiliary indicators")
            aux = aux if isinstance(aux, Tensor) else Tensor(aux)
            if aux.shape != (pooled.shape[0], self.aux_dim):
                raise ValueError(f"aux must have shape {(pooled.shape[0], self.aux_dim)}, got {aux.shape}")
            h = concat([pooled, aux], axis=-1)
        else:
            h = pooled
        for layer in self.layers[:-1]:
            h = gelu(layer(h))
        out = self.layers[-1](h).reshape(-1)
        return out.sigmoid() if self.mode == "classification" else out


def risk_forward(head: RiskHead, latent, aux) -> np.ndarray:
    """Scores as a plain array; see :class:`RiskHead`."""
    latent = latent if isinstance(latent, Tensor) else Tensor(latent)
    return head(latent, aux).data


_EPS = 1e-12


def binary_cross_entropy(p: Tensor, y: np.ndarray) -> Tensor:
    y = np.asarray(y, dtype=np.float64)
    pc = p.clip(_EPS, 1.0 - _EPS)
    return -(Tensor(y) * pc.log() + Tensor(1 - y) * (1 - pc).log()).mean()


@dataclass
class LossBreakdown:
    total: Tensor
    forecast: float
    recon: float
    risk: float
    kl: float
    terms: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"total": float(self.total.data), "forecast": self.forecast, "recon": self.recon,
                "risk": self.risk, "kl": self.kl}


def joint_loss(forecast: Tensor, forecast_target, recon: Tensor, recon_target,
               risk_score: Tensor | None, risk_label, mu: Tensor, logvar: Tensor,
               cfg: RiskConfig) -> LossBreakdown:
    """``MSE(forecast) + l1 * L1(recon) + l2 * risk + beta * KL``.

    The risk term is binary cross-entropy in classification mode and MSE in
    regression mode. ``terms`` holds the already-weighted summands, which add
    up to ``total``.
    """
    ft = np.asarray(forecast_target, dtype=np.float64)
    rt = np.asarray(recon_target, dtype=np.float64)
    if forecast.shape != ft.shape:
        raise ValueError(f"forecast shape {forecast.shape} != target {ft.shape}")
    if recon.shape != rt.shape:
        raise ValueError(f"reconstruction shape {recon.shape} != target {rt.shape}")
    l_fc = ((forecast - ft) ** 2).mean()
    l_rec = (recon - rt).abs().mean()
    if risk_score is not None and cfg.lambda2 > 0:
        lbl = np.asarray(risk_label, dtype=np.float64).reshape(risk_score.shape)
        if cfg.risk_mode == "classification":
            l_risk = binary_cross_entropy(risk_score, lbl)
        else:
            l_risk = ((risk_score - lbl) ** 2).mean()
    else:
        l_risk = Tensor(0.0)
    l_kl = kl_regularizer_tensor(mu, logvar)
    weighted = {
        "forecast": l_fc,
        "recon": l_rec * cfg.lambda1,
        "risk": l_risk * cfg.lambda2,
        "kl": l_kl * cfg.beta,
    }
    total = weighted["forecast"] + weighted["recon"] + weighted["risk"] + weighted["kl"]
    return LossBreakdown(total=total, forecast=float(l_fc.data), recon=float(l_rec.data),
                         risk=float(l_risk.data), kl=float(l_kl.data),
                         terms={k: float(v.data) for k, v in weighted.items()})


def risk_labels(horizon_vol: np.ndarray, train_mask: np.ndarray, percentile: float = 90.0) -> tuple[np.ndarray, float]:
    """1 where horizon volatility exceeds the training-split percentile."""
    horizon_vol = np.asarray(horizon_vol, dtype=np.float64)
    train_vals = horizon_vol[np.asarray(train_mask, dtype=bool)]
    if train_vals.size == 0:
        raise ValueError("no training windows to fit the risk threshold")
    cut = float(np.percentile(train_vals, percentile))
    return (horizon_vol > cut).astype(np.float64), cut


@dataclass
class RiskSeries:
    dates: list[str]
    scores: np.ndarray
    labels: np.ndarray
    definition: str

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if not (len(self.dates) == len(self.scores) == len(self.labels)):
            raise ValueError("dates, scores and labels must have equal length")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["window_end_date", "score", "label"])
            for d, s, l in zip(self.dates, self.scores, self.labels):
                w.writerow([d, repr(float(s)), int(l) if float(l).is_integer() else repr(float(l))])

    @classmethod
    def from_csv(cls, path: str | Path, definition: str = "") -> "RiskSeries":
        dates, scores, labels = [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["window_end_date", "score", "label"]:
                raise ValueError(f"{path}: expected header window_end_date,score,label")
            for row in reader:
                dates.append(row["window_end_date"])
                scores.append(float(row["score"]))
                labels.append(float(row["label"]))
        return cls(dates, np.array(scores), np.array(labels), definition)
