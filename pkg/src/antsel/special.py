"""Exponentially scaled modified Bessel function of the first kind, order zero."""
from __future__ import annotations

import numpy as np

try:
    from ._kernels import bessel_i0e as _compiled
except ImportError:  # numba missing
    _compiled = None

_SERIES_LIMIT = 15.0
_SERIES_TERMS = 60
_ASYMPTOTIC_TERMS = 40


def _series(x: np.ndarray) -> np.ndarray:
    # sum_k (x^2/4)^k / (k!)^2, all terms positive
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    q_max = float(q.max()) if q.size else 0.0
    for k in range(1, _SERIES_TERMS):
        term = term * q / (k * k)
        total = total + term
        # once the term ratio is below 1/2 the tail is bounded by the last term
        if k * k >= 2.0 * q_max and np.all(term <= 1e-17 * total):
            break
    return np.exp(-x) * total


def _asymptotic(x: np.ndarray) -> np.ndarray:
    # e^-x I0(x) ~ (2 pi x)^-1/2 sum_k [(2k-1)!!]^2 / (k! (8x)^k); stop at the smallest term
    term = np.ones_like(x)
    total = np.ones_like(x)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, _ASYMPTOTIC_TERMS):
        nxt = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        active &= np.abs(nxt) < np.abs(term)
        term = np.where(active, nxt, term)
        total = total + np.where(active, nxt, 0.0)
    return total / np.sqrt(2.0 * np.pi * x)


def bessel_i0_scaled(x):
    """``exp(-x) * I0(x)`` for ``x >= 0``; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("bessel_i0_scaled is defined for x >= 0")
    if _compiled is not None:
        out = _compiled(np.ascontiguousarray(arr).ravel()).reshape(arr.shape)
        return out if out.ndim else float(out)
    small = arr <= _SERIES_LIMIT
    out = np.empty_like(arr)
    out[small] = _series(arr[small])
    if np.any(~small):
        out[~small] = _asymptotic(arr[~small])
    return out if out.ndim else float(out)
