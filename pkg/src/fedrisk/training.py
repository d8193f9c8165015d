"""Adam with cosine-annealed learning rate, early stopping and loss logging."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autograd import Tensor, no_grad
from .data import WindowBatch
from .model import HybridForecaster
from .risk import joint_loss, risk_labels
from .seeding import make_rng

log = logging.getLogger(__name__)

LOG_COLUMNS = ["epoch", "train_loss", "val_loss", "lr", "forecast", "recon", "risk", "kl", "seconds"]


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, log: "TrainLog"):
        super().__init__(message)
        self.log = log


@dataclass
class TrainConfig:
    epochs: int = 100
    lr0: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    patience: int = 10
    batch_size: int = 32
    grad_clip: float | None = 5.0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lr0 >= 0:
            raise ValueError("lr0 must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def cosine_lr(epoch: float, total: int, lr0: float) -> float:
    """``lr0 * (1 + cos(pi * epoch / total)) / 2`` for ``0 <= epoch <= total``."""
    if not 0 <= epoch <= total:
        raise ValueError(f"epoch {epoch} outside 0..{total}")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """In-place bias-corrected Adam update."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise FloatingPointError("non-finite gradient")
    b1, b2 = betas
    state.step += 1
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class TrainLog:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    terms: list[dict] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""

    def append(self, epoch, train_loss, val_loss, lr, terms, seconds) -> None:
        self.epoch.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.lr.append(lr)
        self.terms.append(terms)
        self.seconds.append(seconds)

    @property
    def best_val(self) -> float:
        return self.val_loss[self.epoch.index(self.best_epoch)]

    def rows(self) -> list[list]:
        return [[e, tl, vl, lr, t["forecast"], t["recon"], t["risk"], t["kl"], s]
                for e, tl, vl, lr, t, s in zip(self.epoch, self.train_loss, self.val_loss,
                                               self.lr, self.terms, self.seconds)]

    def to_csv(self, path: str | Path, include_timing: bool = False) -> None:
        cols = LOG_COLUMNS if include_timing else LOG_COLUMNS[:-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:len(cols)]])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainLog":
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                terms = {k: float(row[k]) for k in ("forecast", "recon", "risk", "kl")}
                out.append(int(row["epoch"]), float(row["train_loss"]), float(row["val_loss"]),
                           float(row["lr"]), terms, float(row.get("seconds") or 0.0))
        if out.val_loss:
            out.best_epoch = out.epoch[int(np.argmin(out.val_loss))]
        return out


def batch_labels(batch: WindowBatch, cut: float) -> np.ndarray:
    return (batch.horizon_vol > cut).astype(np.float64)


def _loss_on(model: HybridForecaster, x, y, labels, training: bool, rng):
    out = model(x, training=training, rng=rng)
    cfg = model.cfg
    return joint_loss(out.forecast, y[..., None], out.reconstruction, x[:, :, cfg.target_index:cfg.target_index + 1],
                      out.risk_score, labels, out.latent_mu, out.latent_logvar, model.risk_cfg)


def evaluate_loss(model: HybridForecaster, batch: WindowBatch, labels: np.ndarray,
                  batch_size: int = 64) -> tuple[float, dict]:
    """Size-weighted mean joint loss (inference mode) over a window set."""
    total, terms, n = 0.0, {"forecast": 0.0, "recon": 0.0, "risk": 0.0, "kl": 0.0}, 0
    with no_grad():
        for i in range(0, len(batch), batch_size):
            sl = slice(i, i + batch_size)
            res = _loss_on(model, batch.inputs[sl], batch.targets[sl], labels[sl], False, None)
            m = len(batch.inputs[sl])
            total += float(res.total.data) * m
            for k in terms:
                terms[k] += res.terms[k] * m
            n += m
    return total / n, {k: v / n for k, v in terms.items()}


def clip_gradients(grads: list[np.ndarray], max_norm: float | None) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            g *= scale
    return norm


def fit(model: HybridForecaster, data: dict[str, WindowBatch], cfg: TrainConfig, seed: int = 0,
        risk_cut: float | None = None, on_epoch=None) -> tuple[HybridForecaster, TrainLog]:
    """Minimize the joint loss on ``data['train']`` with early stopping on ``data['val']``.

    Parameters of the best validation epoch are restored before returning.
    ``risk_cut`` is the horizon-volatility threshold for risk labels; by
    default the training split's ``label_percentile`` percentile.
    """
    train, val = data["train"], data["val"]
    if len(train) == 0 or len(val) == 0:
        raise ValueError("fit needs non-empty train and val windows")
    if risk_cut is None:
        _, risk_cut = risk_labels(train.horizon_vol, np.ones(len(train), bool),
                                  model.risk_cfg.label_percentile)
    y_train = batch_labels(train, risk_cut)
    y_val = batch_labels(val, risk_cut)
    params = model.parameters()
    state = AdamState.zeros_like([p.data for p in params])
    order_rng = make_rng(seed, 1)
    noise_rng = make_rng(seed, 2)
    tlog = TrainLog()
    best_val, best_state, stale = math.inf, model.state_dict(), 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = cosine_lr(epoch, cfg.epochs, cfg.lr0)
        order = order_rng.permutation(len(train))
        sums = {"total": 0.0, "forecast": 0.0, "recon": 0.0, "risk": 0.0, "kl": 0.0}
        for i in range(0, len(order), cfg.batch_size):
            idx = np.sort(order[i:i + cfg.batch_size])
            model.zero_grad()
            res = _loss_on(model, train.inputs[idx], train.targets[idx], y_train[idx], True, noise_rng)
            if not np.isfinite(res.total.data):
                model.load_state_dict(best_state)
                tlog.stop_reason = f"diverged at epoch {epoch + 1}: non-finite loss"
                raise TrainingDiverged(tlog.stop_reason, tlog)
            res.total.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            clip_gradients(grads, cfg.grad_clip)
            try:
                adam_step([p.data for p in params], grads, state, lr, cfg.betas, cfg.eps)
            except FloatingPointError:
                model.load_state_dict(best_state)
                tlog.stop_reason = f"diverged at epoch {epoch + 1}: non-finite gradient"
                raise TrainingDiverged(tlog.stop_reason, tlog) from None
            m = len(idx)
            sums["total"] += float(res.total.data) * m
            for k in ("forecast", "recon", "risk", "kl"):
                sums[k] += res.terms[k] * m
        n = len(order)
        val_loss, _ = evaluate_loss(model, val, y_val)
        terms = {k: sums[k] / n for k in ("forecast", "recon", "risk", "kl")}
        tlog.append(epoch + 1, sums["total"] / n, val_loss, lr, terms, time.perf_counter() - t0)
        if on_epoch is not None:
            on_epoch(tlog)
        log.info("epoch %d train %.6f val %.6f lr %.2e", epoch + 1, sums["total"] / n, val_loss, lr)
        if not np.isfinite(val_loss):
            model.load_state_dict(best_state)
            tlog.stop_reason = f"diverged at epoch {epoch + 1}: non-finite validation loss"
            raise TrainingDiverged(tlog.stop_reason, tlog)
        if val_loss < best_val:
            best_val, best_state, stale = val_loss, model.state_dict(), 0
            tlog.best_epoch = epoch + 1
        else:
            stale += 1
            if stale > cfg.patience:
                tlog.stop_reason = f"early stop after epoch {epoch + 1}"
                break
    else:
        tlog.stop_reason = "completed"
    model.load_state_dict(best_state)
    return model, tlog
