"""Exact discrete Fourier transforms for arbitrary lengths.

No zero padding and no length restrictions: composite lengths run
through vectorized mixed-radix Cooley-Tukey decimation, prime lengths
up to a small bound through a direct DFT matrix product, and larger
primes through Bluestein's chirp-z convolution carried out at a
power-of-two length.  Everything reduces to batched numpy matmuls over
the trailing axis, so transforming a stack of rows costs a handful of
vectorized passes rather than a Python loop per row.

Conventions: forward transforms are unnormalized,
F[k] = sum_j f[j] exp(-2*pi*i*j*k/n); inverses carry 1/n per axis.
2D transforms decompose row-column: for an image f[y, x] of shape
(height, width), F[n, m] pairs m with x/width and n with y/height.

Twiddle factors, DFT matrices, and Bluestein plans are cached per
length and frozen read-only, so concurrent transforms may share them.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["fft", "ifft", "fft2", "ifft2", "dft2", "idft2", "fftshift2"]

# Largest prime length handled by the direct O(p^2) matrix kernel;
# larger primes switch to Bluestein's O(p log p) convolution.
_DIRECT_PRIME_LIMIT = 61


@lru_cache(maxsize=None)
def _smallest_prime_factor(n: int) -> int:
    if n % 2 == 0:
        return 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return f
        f += 2
    return n


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@lru_cache(maxsize=None)
def _dft_matrix(p: int, sign: int) -> np.ndarray:
    k = np.arange(p)
    return _frozen(np.exp((sign * 2j * np.pi / p) * np.outer(k, k)))


@lru_cache(maxsize=None)
def _twiddles(n: int, p: int, sign: int) -> np.ndarray:
    # W_n^(sign*s*u) for residue s in [0, p), sub-frequency u in [0, n/p)
    s = np.arange(p)[:, None]
    u = np.arange(n // p)[None, :]
    return _frozen(np.exp((sign * 2j * np.pi / n) * (s * u)))


@lru_cache(maxsize=None)
def _bluestein_plan(n: int, sign: int):
    j = np.arange(n, dtype=np.int64)
    # Chirp angle pi*j^2/n wraps mod 2*pi; reduce j^2 mod 2n in exact
    # integer arithmetic first so large j lose no precision.
    chirp = np.exp((sign * 1j * np.pi / n) * ((j * j) % (2 * n)))
    m = 1
    while m < 2 * n - 1:
        m *= 2
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1 :] = np.conj(chirp[1:][::-1])
    return _frozen(chirp), _frozen(_fft_last(b, -1)), m


def _bluestein(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    chirp, fb, m = _bluestein_plan(n, sign)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    fa = _fft_last(a, -1)
    fa *= fb
    conv = _fft_last(fa, +1)[..., :n]
    conv *= 1.0 / m
    conv *= chirp
    return conv


def _fft_last(x: np.ndarray, sign: int) -> np.ndarray:
    """Unnormalized DFT along the last axis of a complex128 array."""
    n = x.shape[-1]
    if n == 1:
        return x.copy()
    p = _smallest_prime_factor(n)
    if p == n:
        if n <= _DIRECT_PRIME_LIMIT:
            return x @ _dft_matrix(n, sign)
        return _bluestein(x, sign)
    m = n // p
    # Decimate: residue class s along axis -2 holds x[s::p], length m.
    sub = np.swapaxes(x.reshape(x.shape[:-1] + (m, p)), -1, -2)
    out = _fft_last(np.ascontiguousarray(sub), sign)
    out *= _twiddles(n, p, sign)
    # Combine residues: X[t*m + u] = sum_s W_p^(s*t) * twiddled[s, u].
    out = np.matmul(_dft_matrix(p, sign), out)
    return out.reshape(x.shape)


def _as_complex(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.size == 0:
        raise ValueError("cannot transform an empty array")
    return np.ascontiguousarray(arr, dtype=np.complex128)


def fft(x, axis: int = -1) -> np.ndarray:
    """DFT along `axis`; any length, batched over the other axes."""
    arr = _as_complex(x)
    moved = np.moveaxis(arr, axis, -1)
    return np.moveaxis(_fft_last(np.ascontiguousarray(moved), -1), -1, axis)


def ifft(x, axis: int = -1) -> np.ndarray:
    """Inverse of fft along `axis` (carries the 1/n factor)."""
    arr = _as_complex(x)
    moved = np.moveaxis(arr, axis, -1)
    out = _fft_last(np.ascontiguousarray(moved), +1)
    out *= 1.0 / out.shape[-1]
    return np.moveaxis(out, -1, axis)


def _fft2_signed(x, sign: int) -> np.ndarray:
    arr = _as_complex(x)
    if arr.ndim < 2:
        raise ValueError(f"need at least 2 dimensions, got shape {arr.shape}")
    out = _fft_last(arr, sign)                      # rows
    out = np.ascontiguousarray(np.swapaxes(out, -1, -2))
    out = _fft_last(out, sign)                      # columns
    return np.swapaxes(out, -1, -2)


def fft2(x) -> np.ndarray:
    """2D DFT over the trailing two axes; leading axes are batch."""
    return _fft2_signed(x, -1)


def ifft2(x) -> np.ndarray:
    """Inverse 2D DFT over the trailing two axes (1/(height*width) factor)."""
    out = _fft2_signed(x, +1)
    out *= 1.0 / (out.shape[-1] * out.shape[-2])
    return out


def dft2(img) -> np.ndarray:
    """Exact 2D DFT of a single image, any dimensions >= 1.

    Returns a complex128 array of the same shape; bin [n, m] pairs m
    with the horizontal axis and n with the vertical axis.
    """
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {arr.shape}")
    return fft2(arr)


def idft2(spectrum) -> np.ndarray:
    """Inverse of dft2 for a single 2D spectrum."""
    arr = np.asarray(spectrum)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D spectrum, got shape {arr.shape}")
    return ifft2(arr)


def fftshift2(a) -> np.ndarray:
    """Roll the trailing two axes so the zero-frequency bin sits at
    (height//2, width//2)."""
    arr = np.asarray(a)
    if arr.ndim < 2:
        raise ValueError(f"need at least 2 dimensions, got shape {arr.shape}")
    return np.roll(arr, (arr.shape[-2] // 2, arr.shape[-1] // 2), axis=(-2, -1))
