"""Decomposed frequency-attention forecaster with reconstruction and latent outputs.

Data flow for one window ``x`` of shape (B, T, F):

* trailing moving-average split into trend and seasonal parts;
* trend path: the close-channel trend is kept as the fitted trend over the
  window and linearly projected over time to the ``horizon`` future steps;
* seasonal path: embedding, then encoder layers built from learned spectral
  filters with position-wise feed-forward sublayers;
* a Gaussian latent (mean and log-variance) read from the final encoder state;
* decoder inputs over ``T + horizon`` steps are seeded with the trend curve
  and, for the observed steps, the mode-truncated seasonal part (zeros for
  the future steps); they cross-attend the encoder state through frequency
  attention;
* seasonal head output plus the trend curve gives the reconstruction (first
  ``T`` steps) and the forecast (last ``horizon`` steps).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .autograd import (Linear, Module, Tensor, concat, dropout, gelu, moving_average, no_grad,
                       parameter)
from .freq_attention import (FreqAttentionConfig, FrequencyCrossAttention, FrequencyEnhancedBlock,
                             lowpass, select_modes)
from .risk import RiskConfig, RiskHead
from .seeding import make_rng

CHECKPOINT_FORMAT = "fedrisk-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    seq_len: int = 256
    horizon: int = 24
    feature_dim: int = 7
    d_model: int = 64
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 1
    modes: int = 32
    mode_selection: str = "lowest"
    trend_window: int = 25
    dropout_rate: float = 0.1
    latent_dim: int = 32
    d_ff: int = 128
    inner_decomposition: bool = False
    target_index: int = 3
    aux_index: tuple[int, ...] = (5, 6)
    seed: int = 0

    def __post_init__(self):
        self.aux_index = tuple(int(i) for i in self.aux_index)
        if not self.seq_len > self.horizon > 0:
            raise ValueError("need seq_len > horizon > 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be a multiple of n_heads")
        if not 0 < self.modes <= self.seq_len:
            raise ValueError("modes must lie in 1..seq_len")
        if not 0 <= self.target_index < self.feature_dim:
            raise ValueError("target_index outside the feature vector")
        if self.trend_window < 1:
            raise ValueError("trend_window must be positive")


@dataclass
class ForwardOutput:
    forecast: Tensor        # (B, horizon, 1)
    reconstruction: Tensor  # (B, T, 1)
    latent: Tensor          # (B, T, latent_dim)
    latent_mu: Tensor
    latent_logvar: Tensor
    risk_score: Tensor | None = None  # (B,)

    def squeeze_batch(self) -> "ForwardOutput":
        pick = lambda t: None if t is None else Tensor(t.data[0])  # noqa: E731
        return ForwardOutput(pick(self.forecast), pick(self.reconstruction), pick(self.latent),
                             pick(self.latent_mu), pick(self.latent_logvar), pick(self.risk_score))


def positional_encoding(length: int, width: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(width)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / width)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def latent_sample(mu: Tensor, logvar: Tensor, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Reparameterized draw ``mu + exp(logvar / 2) * eps`` in training, ``mu`` otherwise."""
    if mu.shape != logvar.shape:
        raise ValueError("mu and logvar must have equal shapes")
    if not training:
        return mu
    if rng is None:
        raise ValueError("sampling in training mode needs an rng")
    eps = Tensor(rng.standard_normal(mu.shape))
    return mu + (logvar * 0.5).exp() * eps


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        self.up = Linear(d_model, d_ff, rng)
        self.down = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(gelu(self.up(x)))


class EncoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.filter = FrequencyEnhancedBlock(cfg.seq_len, cfg.d_model, cfg.modes, rng,
                                             cfg.mode_selection, cfg.seed)
        self.mix = Linear(cfg.d_model, cfg.d_model, rng)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng)

    def __call__(self, x: Tensor, training: bool, rng) -> Tensor:
        p = self.cfg.dropout_rate
        x = x + dropout(self.mix(self.filter(x)), p, rng, training)
        if self.cfg.inner_decomposition:
            x = x - moving_average(x, self.cfg.trend_window, axis=1)
        x = x + dropout(self.ff(x), p, rng, training)
        if self.cfg.inner_decomposition:
            x = x - moving_average(x, self.cfg.trend_window, axis=1)
        return x


class DecoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.cfg = cfg
        acfg = FreqAttentionConfig(cfg.d_model, cfg.n_heads, cfg.modes, cfg.mode_selection, cfg.seed)
        self.cross = FrequencyCrossAttention(acfg, cfg.seq_len, cfg.d_model, rng)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng)

    def __call__(self, x: Tensor, memory: Tensor, training: bool, rng) -> Tensor:
        p = self.cfg.dropout_rate
        x = x + dropout(self.cross(x, memory), p, rng, training)
        return x + dropout(self.ff(x), p, rng, training)


class HybridForecaster(Module):
    def __init__(self, cfg: ModelConfig, risk_cfg: RiskConfig | None = None):
        self.cfg = cfg
        self.risk_cfg = risk_cfg or RiskConfig()
        if len(cfg.aux_index) != self.risk_cfg.aux_dim:
            raise ValueError("aux_index length must equal the risk head's aux_dim")
        rng = make_rng(cfg.seed)
        t, k, d = cfg.seq_len, cfg.horizon, cfg.d_model
        self.trend_proj = parameter(np.full((t, k), 1.0 / t))
        self.trend_bias = parameter(np.zeros(k))
        self.enc_embed = Linear(cfg.feature_dim, d, rng)
        self.encoder = [EncoderLayer(cfg, rng) for _ in range(cfg.n_encoder_layers)]
        self.dec_trend_embed = Linear(1, d, rng)
        self.dec_seasonal_embed = Linear(cfg.feature_dim, d, rng)
        self.decoder = [DecoderLayer(cfg, rng) for _ in range(cfg.n_decoder_layers)]
        self.seasonal_head = Linear(d, 1, rng)
        self.to_latent = Linear(d, cfg.latent_dim, rng)
        self.mu_head = Linear(cfg.latent_dim, cfg.latent_dim, rng)
        self.logvar_head = Linear(cfg.latent_dim, cfg.latent_dim, rng)
        self.risk_head = RiskHead(cfg.latent_dim, self.risk_cfg, rng)
        self._pos = positional_encoding(t + k, d)
        self._dec_modes = select_modes(t, cfg.modes, cfg.mode_selection, cfg.seed)

    def __call__(self, x, training: bool = False, rng: np.random.Generator | None = None,
                 aux=None) -> ForwardOutput:
        return self.forward(x, training, rng, aux)

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None,
                aux=None) -> ForwardOutput:
        cfg = self.cfg
        data = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
        single = data.ndim == 2
        if single:
            data = data[None]
        if data.ndim != 3 or data.shape[1:] != (cfg.seq_len, cfg.feature_dim):
            raise ValueError(f"expected window shape (B, {cfg.seq_len}, {cfg.feature_dim}), got {data.shape}")
        if np.isnan(data).any():
            raise ValueError("NaN in input window")
        if training and rng is None:
            raise ValueError("training mode needs an rng")
        if aux is None and self.risk_cfg.aux_dim:
            aux = data[:, -1, list(cfg.aux_index)]
        b, t, k = data.shape[0], cfg.seq_len, cfg.horizon
        xin = Tensor(data)
        trend = moving_average(xin, cfg.trend_window, axis=1)
        seasonal = xin - trend

        trend_close = trend[:, :, cfg.target_index]
        trend_future = trend_close @ self.trend_proj + self.trend_bias
        trend_curve = concat([trend_close, trend_future], axis=1)

        h = self.enc_embed(seasonal) + self._pos[:t]
        for layer in self.encoder:
            h = layer(h, training, rng)

        latent = self.to_latent(h)
        mu = self.mu_head(latent)
        logvar = self.logvar_head(latent)

        smooth = lowpass(seasonal, self._dec_modes, axis=1)
        seasonal_init = concat([smooth, Tensor(np.zeros((b, k, cfg.feature_dim)))], axis=1)
        q = (self.dec_trend_embed(trend_curve.reshape(b, t + k, 1))
             + self.dec_seasonal_embed(seasonal_init) + self._pos)
        for layer in self.decoder:
            q = layer(q, h, training, rng)
        seasonal_out = self.seasonal_head(q).reshape(b, t + k)
        full = (trend_curve + seasonal_out).reshape(b, t + k, 1)

        z = latent_sample(mu, logvar, rng, training)
        score = self.risk_head(z, aux)
        out = ForwardOutput(full[:, t:, :], full[:, :t, :], latent, mu, logvar, score)
        return out.squeeze_batch() if single else out

    def predict(self, x, batch_size: int = 64) -> dict[str, np.ndarray]:
        """Inference over many windows; returns plain arrays."""
        x = np.asarray(x, dtype=np.float64)
        parts: dict[str, list] = {"forecast": [], "reconstruction": [], "risk_score": [], "latent_mu": []}
        with no_grad():
            for i in range(0, len(x), batch_size):
                out = self.forward(x[i:i + batch_size], training=False)
                parts["forecast"].append(out.forecast.data[..., 0])
                parts["reconstruction"].append(out.reconstruction.data[..., 0])
                parts["risk_score"].append(out.risk_score.data)
                parts["latent_mu"].append(out.latent_mu.data.mean(axis=1))
        return {key: np.concatenate(v) if v else np.empty(0) for key, v in parts.items()}

    # -- parameter snapshots ---------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(params) != set(state):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ValueError(f"state mismatch; missing={missing[:5]} unexpected={extra[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.data.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.data.shape}")
            p.data = value.copy()


def _config_dict(cfg) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def save_checkpoint(model: HybridForecaster, path: str | Path, extra: dict | None = None) -> str:
    """Write config and parameters as JSON; returns the file's sha256.

    Floats are written with ``repr`` so loading restores them bit for bit.
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": _config_dict(model.cfg),
        "risk_config": _config_dict(model.risk_cfg),
        "extra": extra or {},
        "params": {name: {"shape": list(a.shape), "data": a.ravel().tolist()}
                   for name, a in model.state_dict().items()},
    }
    text = json.dumps(payload, separators=(",", ":"))
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load_checkpoint(path: str | Path) -> tuple[HybridForecaster, dict]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = json.loads(path.read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    mfields = {f.name for f in fields(ModelConfig)}
    rfields = {f.name for f in fields(RiskConfig)}
    cfg = ModelConfig(**{k: v for k, v in payload["model_config"].items() if k in mfields})
    rcfg = RiskConfig(**{k: v for k, v in payload["risk_config"].items() if k in rfields})
    model = HybridForecaster(cfg, rcfg)
    state = {name: np.asarray(v["data"], dtype=np.float64).reshape(v["shape"])
             for name, v in payload["params"].items()}
    model.load_state_dict(state)
    return model, payload.get("extra", {})
