"""Compiled versions of the sidelobe scan.

Semantics match the numpy implementation in :mod:`antsel.beam_metrics`,
which is also used when numba is unavailable.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _is_trough(p, j):
    return p[j] <= p[j - 1] and p[j] < p[j + 1]


@njit(cache=True)
def _scan_row(p, j0, row, rows, cols, offs, count):
    n = p.size
    lo = -1
    for j in range(j0 - 1, 0, -1):
        if _is_trough(p, j):
            lo = j
            break
    hi = n
    for j in range(j0 + 1, n - 1):
        if _is_trough(p, j):
            hi = j
            break
    for j in range(1, n - 1):
        if lo <= j <= hi:
            continue
        vm = p[j - 1]
        v0 = p[j]
        vp = p[j + 1]
        # a peak straddled by two equal samples counts once, at the left one
        if v0 > vm and (v0 > vp or (v0 == vp and j + 2 < n and p[j + 2] < vp)):
            rows[count] = row
            cols[count] = j
            offs[count] = 0.5 * (vm - vp) / (vm - 2.0 * v0 + vp)
            count += 1
    return count


@njit(cache=True)
def scan_power(power, j0):
    """Sidelobe peaks of each power row.

    Returns (rows, cols, offsets): grid column of each peak and its parabolic
    offset in grid steps.
    """
    r, n = power.shape
    # a strict local maximum needs at least two samples, so n // 2 bounds a row
    cap = r * (n // 2 + 1)
    rows = np.empty(cap, np.int64)
    cols = np.empty(cap, np.int64)
    offs = np.empty(cap)
    count = 0
    for i in range(r):
        count = _scan_row(power[i], j0[i], i, rows, cols, offs, count)
    return rows[:count].copy(), cols[:count].copy(), offs[:count].copy()


@njit(cache=True)
def field_power(field):
    r, n = field.shape
    power = np.empty((r, n))
    for i in range(r):
        for j in range(n):
            z = field[i, j]
            power[i, j] = z.real * z.real + z.imag * z.imag
    return power


@njit(cache=True)
def removal_peaks(current, element, removed, j0):
    """Sidelobe peaks of ``|current - element[k]|**2`` for every removed antenna ``k``.

    ``current`` is (anchors, grid) and ``element`` is (N, anchors, grid); the
    returned row index runs over (removed, anchor) in C order.
    """
    a_count, n = current.shape
    r = removed.size * a_count
    cap = r * (n // 2 + 1)
    rows = np.empty(cap, np.int64)
    cols = np.empty(cap, np.int64)
    offs = np.empty(cap)
    p = np.empty(n)
    count = 0
    for c in range(removed.size):
        k = removed[c]
        for a in range(a_count):
            for j in range(n):
                z = current[a, j] - element[k, a, j]
                p[j] = z.real * z.real + z.imag * z.imag
            count = _scan_row(p, j0[a], c * a_count + a, rows, cols, offs, count)
    return rows[:count].copy(), cols[:count].copy(), offs[:count].copy()


@njit(cache=True)
def correlations(pos, u0, rows, loc):
    out = np.empty(rows.size)
    m = pos.shape[1]
    for p in range(rows.size):
        i = rows[p]
        du = math.pi * (loc[p] - u0[i])
        re = 0.0
        im = 0.0
        for k in range(m):
            ph = pos[i, k] * du
            re += math.cos(ph)
            im += math.sin(ph)
        out[p] = min(math.sqrt(re * re + im * im), float(m))
    return out


@njit(cache=True)
def _i0e_scalar(x):
    if x <= 15.0:
        q = 0.25 * x * x
        term = 1.0
        total = 1.0
        for k in range(1, 60):
            term = term * q / (k * k)
            total += term
            if k * k >= 2.0 * q and term <= 1e-17 * total:
                break
        return math.exp(-x) * total
    term = 1.0
    total = 1.0
    for k in range(1, 40):
        nxt = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += nxt
    return total / math.sqrt(2.0 * math.pi * x)


@njit(cache=True)
def bessel_i0e(x):
    out = np.empty(x.size)
    flat = x.ravel()
    for i in range(flat.size):
        out[i] = _i0e_scalar(flat[i])
    return out.reshape(x.shape)
