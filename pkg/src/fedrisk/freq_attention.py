"""Frequency-domain attention and the frequency-enhanced filter block.

Two building blocks share a mode-truncation rule: a spectrum of a length-N
real signal has bins ``0..N//2``; a block keeps ``M`` of them (bin k stands
for the pair k, N-k) and zeroes the rest. ``M == N`` means keep everything.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Linear, Module, Tensor, matmul, parameter, softmax, spectral_filter
from .seeding import make_rng

MODE_SELECTIONS = ("lowest", "random")


def select_modes(seq_len: int, modes: int, selection: str = "lowest", seed: int = 0) -> np.ndarray:
    """Indices of the retained half-spectrum bins for a length ``seq_len`` signal.

    ``lowest`` keeps bins ``0..modes-1``. ``random`` keeps the DC bin plus
    ``modes-1`` others drawn with ``seed``. ``modes == seq_len`` keeps all.
    """
    if seq_len < 1:
        raise ValueError("sequence length must be positive")
    if modes < 1:
        raise ValueError("modes must be positive")
    if modes > seq_len:
        raise ValueError(f"modes={modes} exceeds sequence length {seq_len}")
    n_bins = seq_len // 2 + 1
    if modes == seq_len or modes >= n_bins:
        return np.arange(n_bins)
    if selection == "lowest":
        return np.arange(modes)
    if selection == "random":
        rng = make_rng(seed, seq_len, modes)
        others = rng.choice(np.arange(1, n_bins), size=modes - 1, replace=False)
        return np.concatenate(([0], np.sort(others))).astype(np.intp)
    raise ValueError(f"unknown mode selection {selection!r}")


@dataclass(frozen=True)
class FreqAttentionConfig:
    d_model: int
    n_heads: int
    modes: int
    mode_selection: str = "lowest"
    seed: int = 0

    def __post_init__(self):
        if self.n_heads < 1 or self.d_model % self.n_heads:
            raise ValueError("d_model must be a multiple of n_heads")
        if self.modes < 1:
            raise ValueError("modes must be positive")
        if self.mode_selection not in MODE_SELECTIONS:
            raise ValueError(f"mode_selection must be one of {MODE_SELECTIONS}")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads


def lowpass(x: Tensor, modes: np.ndarray, axis: int = 1) -> Tensor:
    """Keep only the given bins of ``x`` along ``axis``."""
    shape = [1] * x.ndim
    shape[axis] = len(modes)
    one = Tensor(np.ones(shape))
    zero = Tensor(np.zeros(shape))
    return spectral_filter(x, one, zero, modes, axis=axis)


def frequency_attention(q: Tensor, k: Tensor, v: Tensor, modes: np.ndarray,
                        identity_attention: bool = False) -> Tensor:
    """Attention over frequency-filtered values.

    ``q``: (..., L, d_k); ``k``: (..., S, d_k); ``v``: (..., S, d_v). The values
    are projected to the spectrum along the time axis, truncated to ``modes``
    and brought back; weights ``softmax(q k^T / sqrt(d_k))`` then mix them by
    matrix product. ``identity_attention`` replaces the weights with the
    identity (L must equal S) for diagnostics.
    """
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"query/key width mismatch: {q.shape[-1]} vs {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"key/value length mismatch: {k.shape[-2]} vs {v.shape[-2]}")
    seq = v.shape[-2]
    if len(modes) > seq // 2 + 1 or (len(modes) and int(np.max(modes)) > seq // 2):
        raise ValueError("retained modes exceed the value sequence length")
    v_filtered = lowpass(v, modes, axis=v.ndim - 2)
    if identity_attention:
        if q.shape[-2] != seq:
            raise ValueError("identity attention needs equal query and key lengths")
        return v_filtered
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(q.shape[-1]))
    return matmul(softmax(scores, axis=-1), v_filtered)


def frequency_enhanced_block(x: Tensor, w_re: Tensor, w_im: Tensor, modes: np.ndarray) -> Tensor:
    """Per-channel learned complex filter on the retained bins of ``x`` (B, T, C).

    Weights have shape (len(modes), C).
    """
    if w_re.shape != (len(modes), x.shape[-1]) or w_im.shape != w_re.shape:
        raise ValueError(f"filter weights must have shape {(len(modes), x.shape[-1])}")
    return spectral_filter(x, w_re, w_im, modes, axis=x.ndim - 2)


class FrequencyEnhancedBlock(Module):
    """Learned spectral filter over ``seq_len`` steps and ``channels`` channels."""

    def __init__(self, seq_len: int, channels: int, modes: int, rng: np.random.Generator,
                 selection: str = "lowest", seed: int = 0, init: str = "random"):
        self.modes = select_modes(seq_len, modes, selection, seed)
        self.seq_len = seq_len
        m = len(self.modes)
        if init == "identity":
            self.w_re = parameter(np.ones((m, channels)))
            self.w_im = parameter(np.zeros((m, channels)))
        else:
            # small random complex weights around the identity filter
            scale = 1.0 / channels
            self.w_re = parameter(1.0 + scale * rng.standard_normal((m, channels)))
            self.w_im = parameter(scale * rng.standard_normal((m, channels)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-2] != self.seq_len:
            raise ValueError(f"expected sequence length {self.seq_len}, got {x.shape[-2]}")
        return frequency_enhanced_block(x, self.w_re, self.w_im, self.modes)


class FrequencyCrossAttention(Module):
    """Multi-head frequency attention with query/key/value/output projections."""

    def __init__(self, cfg: FreqAttentionConfig, kv_len: int, d_kv: int, rng: np.random.Generator):
        self.cfg = cfg
        self.modes = select_modes(kv_len, cfg.modes, cfg.mode_selection, cfg.seed)
        self.kv_len = kv_len
        self.q_proj = Linear(cfg.d_model, cfg.d_model, rng)
        self.k_proj = Linear(d_kv, cfg.d_model, rng)
        self.v_proj = Linear(d_kv, cfg.d_model, rng)
        self.out_proj = Linear(cfg.d_model, cfg.d_model, rng)

    def _heads(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.cfg.n_heads, self.cfg.d_k).transpose(0, 2, 1, 3)

    def __call__(self, x: Tensor, memory: Tensor) -> Tensor:
        if memory.shape[1] != self.kv_len:
            raise ValueError(f"expected memory length {self.kv_len}, got {memory.shape[1]}")
        q = self._heads(self.q_proj(x))
        k = self._heads(self.k_proj(memory))
        v = self._heads(self.v_proj(memory))
        y = frequency_attention(q, k, v, self.modes)
        b, h, t, dk = y.shape
        return self.out_proj(y.transpose(0, 2, 1, 3).reshape(b, t, h * dk))


__all__ = [
    "FreqAttentionConfig", "FrequencyCrossAttention", "FrequencyEnhancedBlock",
    "frequency_attention", "frequency_enhanced_block", "lowpass", "select_modes",
]
