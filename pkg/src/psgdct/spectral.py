"""Orthonormal DCT transforms and threshold nonlinearities.

The forward transform is the orthonormal DCT-II, the inverse is the
orthonormal DCT-III.  Both are real and orthogonal, so energy is preserved
and the inverse is the transpose of the forward matrix.

The baseline implementation multiplies by an explicit cosine matrix.  A
``method="fft"`` fast path backed by :mod:`scipy.fft` is available and is
checked against the matrix path in the test suite.
"""

from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import InvalidInputError, InvalidParameterError

__all__ = [
    "dct_matrix",
    "dct_forward_1d",
    "dct_inverse_1d",
    "dct2d_forward",
    "dct2d_inverse",
    "soft_threshold",
    "hard_threshold",
    "spectral_multiply",
]


@lru_cache(maxsize=256)
def _dct_matrix_cached(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    c = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    c[0, :] = np.sqrt(1.0 / n)
    c.setflags(write=False)
    return c


def dct_matrix(n):
    """Return the ``n x n`` orthonormal DCT-II matrix ``C``.

    Row ``k`` holds the k-th cosine basis vector, so ``X = C @ x`` and
    ``x = C.T @ X``.  The returned array is read-only and shared.
    """
    n = int(n)
    if n < 1:
        raise InvalidInputError(f"transform length must be >= 1, got {n}")
    return _dct_matrix_cached(n)


def _as_finite(x, ndim):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != ndim:
        raise InvalidInputError(f"expected a {ndim}-D array, got shape {a.shape}")
    if a.size == 0:
        raise InvalidInputError("empty input")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("input contains NaN or Inf")
    return a


def _check_method(method):
    if method not in ("matrix", "fft"):
        raise InvalidParameterError(f"unknown transform method {method!r}")


def dct_forward_1d(x, method="matrix"):
    x = _as_finite(x, 1)
    _check_method(method)
    if method == "fft":
        return scipy.fft.dct(x, type=2, norm="ortho")
    return dct_matrix(x.size) @ x


def dct_inverse_1d(X, method="matrix"):
    X = _as_finite(X, 1)
    _check_method(method)
    if method == "fft":
        return scipy.fft.idct(X, type=2, norm="ortho")
    return dct_matrix(X.size).T @ X


def dct2d_forward(m, method="matrix"):
    """Separable 2-D DCT-II: transform every column, then every row."""
    m = _as_finite(m, 2)
    _check_method(method)
    if method == "fft":
        return scipy.fft.dctn(m, type=2, norm="ortho")
    h, w = m.shape
    return dct_matrix(h) @ m @ dct_matrix(w).T


def dct2d_inverse(M, method="matrix"):
    M = _as_finite(M, 2)
    _check_method(method)
    if method == "fft":
        return scipy.fft.idctn(M, type=2, norm="ortho")
    h, w = M.shape
    return dct_matrix(h).T @ M @ dct_matrix(w)


def _check_tau(tau):
    tau = np.asarray(tau, dtype=np.float64)
    if np.any(~np.isfinite(tau)) or np.any(tau < 0):
        raise InvalidParameterError(f"threshold must be finite and >= 0, got {tau}")
    return tau


def _unwrap(out, x):
    return float(out) if np.ndim(x) == 0 and np.ndim(out) == 0 else out


def soft_threshold(x, tau):
    """``sign(x) * max(|x| - tau, 0)``, elementwise.

    ``tau`` may be a scalar or anything broadcastable against ``x``.
    """
    tau = _check_tau(tau)
    xa = np.asarray(x, dtype=np.float64)
    out = np.sign(xa) * np.maximum(np.abs(xa) - tau, 0.0)
    return _unwrap(out, x)


def hard_threshold(x, tau):
    """Keep entries with ``|x| > tau``, zero the rest."""
    tau = _check_tau(tau)
    xa = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(xa) > tau, xa, 0.0)
    return _unwrap(out, x)


def spectral_multiply(X, W):
    """Elementwise product of two equally shaped coefficient arrays.

    Multiplying transform coefficients is the frequency-domain counterpart
    of filtering in the signal domain.
    """
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.shape != W.shape:
        raise InvalidInputError(f"shape mismatch: {X.shape} vs {W.shape}")
    return X * W
