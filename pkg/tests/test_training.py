import math

import numpy as np
import pytest

import fedrisk.training as training
from fedrisk.data import make_windows
from fedrisk.model import HybridForecaster, ModelConfig
from fedrisk.training import (AdamState, TrainConfig, TrainLog, TrainingDiverged, adam_step,
                              clip_gradients, cosine_lr, fit)

TINY = dict(seq_len=32, horizon=8, d_model=8, n_heads=2, n_encoder_layers=1, n_decoder_layers=1,
            modes=4, latent_dim=4, d_ff=8, trend_window=5)


def _windows(n=260, seed=0):
    t = np.arange(n)
    rng = np.random.default_rng(seed)
    close = 10 + np.sin(2 * np.pi * t / 16) + 0.05 * rng.standard_normal(n)
    feats = np.column_stack([close, close + 0.1, close - 0.1, close, np.full(n, 5.0),
                             np.r_[0, np.diff(close)], np.full(n, 0.01)])
    dates = np.datetime64("2020-01-01") + t
    return make_windows(feats, dates, 32, 8, stride=4, ratios=(0.6, 0.4))


def _model(seed=0):
    return HybridForecaster(ModelConfig(**TINY, seed=seed))


def test_cosine_schedule_endpoints():
    assert cosine_lr(0, 10, 1e-4) == 1e-4
    assert cosine_lr(10, 10, 1e-4) == pytest.approx(0.0, abs=1e-20)
    assert cosine_lr(5, 10, 1e-4) == pytest.approx(5e-5, rel=1e-12)
    with pytest.raises(ValueError):
        cosine_lr(11, 10, 1e-4)


def test_adam_zero_gradient_keeps_params():
    p = np.array([1.0, -2.0])
    state = AdamState([np.array([0.5, 0.5])], [np.array([0.1, 0.1])], step=3)
    adam_step([p], [np.zeros(2)], state, 0.1)
    # moments decay; the update direction is driven by the decayed moments only
    np.testing.assert_allclose(state.m[0], [0.45, 0.45])
    np.testing.assert_allclose(state.v[0], [0.0999, 0.0999])
    p0 = np.array([1.0, -2.0])
    fresh = AdamState.zeros_like([p0])
    adam_step([p0], [np.zeros(2)], fresh, 0.1)
    np.testing.assert_array_equal(p0, [1.0, -2.0])


def test_adam_first_step_by_hand():
    w = np.array([1.0])
    adam_step([w], [2 * w.copy()], AdamState.zeros_like([w]), 0.1)
    g = 2.0
    m_hat = (0.1 * g) / (1 - 0.9)
    v_hat = (0.001 * g * g) / (1 - 0.999)
    assert w[0] == pytest.approx(1 - 0.1 * m_hat / (math.sqrt(v_hat) + 1e-8), abs=1e-15)
    assert w[0] == pytest.approx(0.9, abs=1e-8)


def test_adam_rejects_nan_gradient():
    with pytest.raises(FloatingPointError):
        adam_step([np.zeros(2)], [np.array([np.nan, 0.0])], AdamState.zeros_like([np.zeros(2)]), 0.1)


def test_clip_gradients_scales_to_norm():
    grads = [np.array([3.0]), np.array([4.0])]
    assert clip_gradients(grads, 1.0) == 5.0
    assert math.hypot(grads[0][0], grads[1][0]) == pytest.approx(1.0)


def test_config_validation():
    for kw in ({"epochs": 0}, {"patience": 0}, {"lr0": -1.0}, {"batch_size": 0}):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def test_early_stopping_restores_best(monkeypatch):
    scripted = iter([1.0, 2.0, 3.0, 4.0, 5.0])
    snapshots = []

    def fake_eval(model, batch, labels, batch_size=64):
        snapshots.append(model.state_dict())
        return next(scripted), {}

    monkeypatch.setattr(training, "evaluate_loss", fake_eval)
    model, tlog = fit(_model(), _windows(), TrainConfig(epochs=5, patience=1, lr0=1e-2, batch_size=8))
    assert tlog.epoch == [1, 2, 3]
    assert tlog.best_epoch == 1
    restored = model.state_dict()
    assert all(np.array_equal(restored[k], snapshots[0][k]) for k in restored)


def test_zero_learning_rate_leaves_parameters():
    model = _model()
    before = model.state_dict()
    model, _ = fit(model, _windows(), TrainConfig(epochs=2, lr0=0.0, batch_size=8))
    after = model.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)


def test_same_seed_same_log_and_breakdown_sums():
    logs = []
    for _ in range(2):
        _, tlog = fit(_model(), _windows(), TrainConfig(epochs=3, lr0=3e-3, batch_size=8), seed=4)
        logs.append(tlog)
    a, b = logs
    assert a.train_loss == b.train_loss and a.val_loss == b.val_loss and a.terms == b.terms
    for total, terms in zip(a.train_loss, a.terms):
        assert abs(total - sum(terms.values())) < 1e-12
    assert a.best_val == min(a.val_loss)


def test_toy_sinusoid_loss_halves():
    _, tlog = fit(_model(), _windows(), TrainConfig(epochs=15, lr0=3e-3, batch_size=8, patience=20), seed=0)
    assert tlog.train_loss[-1] < 0.5 * tlog.train_loss[0]


def test_divergence_raises_with_log(monkeypatch):
    monkeypatch.setattr(training, "evaluate_loss", lambda *a, **k: (float("nan"), {}))
    with pytest.raises(TrainingDiverged) as info:
        fit(_model(), _windows(), TrainConfig(epochs=3, batch_size=8))
    assert "diverged" in str(info.value)
    assert info.value.log.epoch == [1]


def test_trainlog_csv_round_trip(tmp_path):
    _, tlog = fit(_model(), _windows(), TrainConfig(epochs=2, lr0=1e-3, batch_size=16))
    tlog.to_csv(tmp_path / "log.csv")
    back = TrainLog.from_csv(tmp_path / "log.csv")
    assert back.train_loss == tlog.train_loss and back.val_loss == tlog.val_loss
    assert back.best_epoch == tlog.best_epoch
