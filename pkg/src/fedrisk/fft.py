"""Discrete Fourier transforms along an arbitrary axis.

Powers of two use an iterative radix-2 decimation-in-time kernel. Every
other length goes through Bluestein's chirp-z identity, which re-expresses
the DFT as a circular convolution evaluated with the radix-2 kernel, so no
zero padding ever changes the transform being computed.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit

__all__ = ["fft", "ifft", "ifft_real", "rfft", "irfft", "dft_reference"]


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=None)
def _twiddles(n: int) -> np.ndarray:
    w = np.exp(-2j * np.pi * np.arange(n // 2) / n)
    w.setflags(write=False)
    return w


@njit(cache=True, nogil=True)
def _radix2_rows(x, rev, w):
    rows, n = x.shape
    out = np.empty_like(x)
    for r in range(rows):
        for i in range(n):
            out[r, rev[i]] = x[r, i]
        size = 2
        while size <= n:
            half = size // 2
            step = n // size
            for start in range(0, n, size):
                for j in range(half):
                    tw = w[j * step]
                    a = out[r, start + j]
                    b = out[r, start + j + half] * tw
                    out[r, start + j] = a + b
                    out[r, start + j + half] = a - b
            size *= 2
    return out


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    lead = x.shape[:-1]
    rows = np.ascontiguousarray(x, dtype=np.complex128).reshape(-1, n)
    out = _radix2_rows(rows, _bit_reverse(n), _twiddles(n))
    return out.reshape(*lead, n)


@lru_cache(maxsize=None)
def _bluestein_plan(n: int) -> tuple[np.ndarray, np.ndarray, int]:
    m = 1
    while m < 2 * n - 1:
        m *= 2
    k = np.arange(n, dtype=np.int64)
    # k^2 mod 2n keeps the chirp phase small and exact for large k
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    b = np.zeros(m, dtype=complex)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:])[::-1]
    b_hat = _fft_pow2(b)
    chirp.setflags(write=False)
    b_hat.setflags(write=False)
    return chirp, b_hat, m


def _fft_bluestein(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    chirp, b_hat, m = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=complex)
    a[..., :n] = x * chirp
    conv = _ifft_pow2(_fft_pow2(a) * b_hat)
    return conv[..., :n] * chirp


def _ifft_pow2(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    return np.conj(_fft_pow2(np.conj(x))) / n


def _fft_last(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if n == 0:
        raise ValueError("empty signal")
    x = x.astype(complex, copy=False)
    if n == 1:
        return x.copy()
    if _is_pow2(n):
        return _fft_pow2(x)
    return _fft_bluestein(x)


def fft(x, axis: int = -1) -> np.ndarray:
    """Unnormalized forward DFT: ``X[k] = sum_t x[t] exp(-2 pi i k t / N)``."""
    x = np.asarray(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("empty signal")
    moved = np.moveaxis(x, axis, -1)
    return np.moveaxis(_fft_last(moved), -1, axis)


def ifft(spectrum, axis: int = -1) -> np.ndarray:
    """Inverse DFT scaled by ``1/N``; returns complex values."""
    s = np.asarray(spectrum)
    if s.ndim == 0 or s.shape[axis] == 0:
        raise ValueError("empty signal")
    n = s.shape[axis]
    return np.conj(fft(np.conj(s), axis=axis)) / n


def ifft_real(spectrum, axis: int = -1, return_residue: bool = False):
    """Real part of :func:`ifft`.

    With ``return_residue=True`` also returns the largest absolute imaginary
    component that was discarded, which is ~1e-15 for spectra of real signals.
    """
    full = ifft(spectrum, axis=axis)
    if return_residue:
        residue = float(np.max(np.abs(full.imag))) if full.size else 0.0
        return full.real.copy(), residue
    return full.real.copy()


@lru_cache(maxsize=None)
def _half_twiddles(n: int) -> np.ndarray:
    w = np.exp(-2j * np.pi * np.arange(n // 2 + 1) / n)
    w.setflags(write=False)
    return w


@njit(cache=True, nogil=True)
def _rfft_rows(x, rev, w, wh):
    rows, n = x.shape
    half = n // 2
    z = np.empty((rows, half), dtype=np.complex128)
    for r in range(rows):
        for m in range(half):
            z[r, m] = complex(x[r, 2 * m], x[r, 2 * m + 1])
    z = _radix2_rows(z, rev, w)
    out = np.empty((rows, half + 1), dtype=np.complex128)
    for r in range(rows):
        for k in range(half + 1):
            zk = z[r, k % half]
            zr = np.conj(z[r, (half - k) % half])
            even = 0.5 * (zk + zr)
            odd = -0.5j * (zk - zr)
            out[r, k] = even + wh[k] * odd
    return out


@njit(cache=True, nogil=True)
def _irfft_rows(s, rev, w, wh):
    rows, bins = s.shape
    half = bins - 1
    n = 2 * half
    z = np.empty((rows, half), dtype=np.complex128)
    for r in range(rows):
        for k in range(half):
            xk = s[r, k]
            xr = np.conj(s[r, half - k])
            if k == 0:
                xk = complex(xk.real, 0.0)
                xr = complex(s[r, half].real, 0.0)
            even = 0.5 * (xk + xr)
            odd = 0.5 * (xk - xr) * np.conj(wh[k])
            # conj trick: inverse transform through the forward kernel
            z[r, k] = np.conj(even + 1j * odd)
    z = _radix2_rows(z, rev, w)
    out = np.empty((rows, n))
    for r in range(rows):
        for m in range(half):
            v = np.conj(z[r, m]) / half
            out[r, 2 * m] = v.real
            out[r, 2 * m + 1] = v.imag
    return out


def _rows_last(x: np.ndarray, axis: int, dtype) -> tuple[np.ndarray, tuple]:
    moved = np.moveaxis(x, axis, -1)
    lead = moved.shape[:-1]
    return np.ascontiguousarray(moved, dtype=dtype).reshape(-1, moved.shape[-1]), lead


def rfft(x, axis: int = -1) -> np.ndarray:
    """Bins ``0..N//2`` of the DFT of a real signal.

    Power-of-two lengths pack adjacent samples into one complex signal of
    length N/2; other lengths take the corresponding slice of :func:`fft`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ValueError("empty signal")
    n = x.shape[axis]
    if n < 4 or not _is_pow2(n):
        spec = fft(x, axis=axis)
        return np.take(spec, np.arange(n // 2 + 1), axis=axis)
    rows, lead = _rows_last(x, axis, np.float64)
    half = n // 2
    out = _rfft_rows(rows, _bit_reverse(half), _twiddles(half), _half_twiddles(n))
    return np.moveaxis(out.reshape(*lead, half + 1), -1, axis)


def irfft(half_spectrum, n: int, axis: int = -1) -> np.ndarray:
    """Real signal of length ``n`` whose bins ``0..n//2`` are given.

    Imaginary parts of the DC and (even n) Nyquist bins are ignored, which
    matches taking the real part of the full Hermitian inverse.
    """
    s = np.asarray(half_spectrum, dtype=np.complex128)
    if n < 1:
        raise ValueError("empty signal")
    if s.shape[axis] != n // 2 + 1:
        raise ValueError(f"expected {n // 2 + 1} bins for n={n}, got {s.shape[axis]}")
    if n < 4 or not _is_pow2(n):
        sm = np.moveaxis(s, axis, -1)
        tail = n - sm.shape[-1]
        mirror = np.conj(sm[..., 1:1 + tail][..., ::-1])
        full = np.concatenate((sm, mirror), axis=-1)
        full[..., 0] = full[..., 0].real
        if n % 2 == 0:
            full[..., n // 2] = full[..., n // 2].real
        return np.moveaxis(ifft(full).real, -1, axis)
    rows, lead = _rows_last(s, axis, np.complex128)
    half = n // 2
    out = _irfft_rows(rows, _bit_reverse(half), _twiddles(half), _half_twiddles(n))
    return np.moveaxis(out.reshape(*lead, n), -1, axis)


def dft_reference(x) -> np.ndarray:
    """O(N^2) direct evaluation of the DFT sum, used as an independent check."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("empty signal")
    t = np.arange(n)
    phase = np.exp(-2j * np.pi * ((np.outer(t, t)) % n) / n)
    return x @ phase.T
