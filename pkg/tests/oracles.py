"""Reference implementations written independently of the package code.

They favour clarity over speed: plain loops, exact integers, mpmath for the
Bessel function. Tests compare the vectorized package against these.
"""
from __future__ import annotations

import cmath
import itertools
import math

import mpmath


def align_bits(bits):
    """Shift to a leading one, do the same for the reversed vector, keep the lower weighted sum."""
    bits = list(bits)
    n = len(bits)

    def shift(v):
        k = v.index(1)
        return v[k:] + [0] * k

    def weight(v):
        return sum(b << i for i, b in enumerate(v))

    a, b = shift(bits), shift(bits[::-1])
    return tuple(a if weight(a) <= weight(b) else b)


def unique_set(n, m):
    out = set()
    for combo in itertools.combinations(range(n), m):
        v = [0] * n
        for i in combo:
            v[i] = 1
        out.add(align_bits(v))
    return sorted(out)


def rfc_switches(unique):
    pairs = set()
    for v in unique:
        ones = [i for i, b in enumerate(v) if b]
        pairs.update(enumerate(ones))
    return len(pairs)


def pattern(pos, u0, u):
    af = sum(cmath.exp(1j * math.pi * d * (u - u0)) for d in pos)
    return abs(af) ** 2


def midpoint_grid(n):
    return [-1.0 + (2 * j + 1) / n for j in range(n)]


def sidelobes(pos, u0, n_grid):
    """(location, correlation) of every sidelobe peak, scanning with plain loops."""
    if len(pos) < 2:
        return []
    grid = midpoint_grid(n_grid)
    p = [pattern(pos, u0, u) for u in grid]
    h = grid[1] - grid[0]
    j0 = min(range(n_grid), key=lambda j: abs(grid[j] - u0))
    lo = -1
    for j in range(j0 - 1, 0, -1):
        if p[j] <= p[j - 1] and p[j] < p[j + 1]:
            lo = j
            break
    hi = n_grid
    for j in range(j0 + 1, n_grid - 1):
        if p[j] <= p[j - 1] and p[j] < p[j + 1]:
            hi = j
            break
    out = []
    for j in range(1, n_grid - 1):
        if lo <= j <= hi:
            continue
        flat_top = j + 2 < n_grid and p[j] == p[j + 1] and p[j + 2] < p[j]
        if p[j] > p[j - 1] and (p[j] > p[j + 1] or flat_top):
            off = 0.5 * (p[j - 1] - p[j + 1]) / (p[j - 1] - 2 * p[j] + p[j + 1])
            loc = grid[j] + off * h
            corr = min(abs(sum(cmath.exp(1j * math.pi * d * (loc - u0)) for d in pos)), len(pos))
            out.append((loc, corr))
    return out


def i0e(x):
    x = mpmath.mpf(x)
    return mpmath.besseli(0, x) * mpmath.exp(-x)


def outlier_p(snr, corr, m):
    x = mpmath.mpf(snr) * corr / (2 * m)
    return float(0.5 * mpmath.exp(x - mpmath.mpf(snr) / 2) * i0e(x))


def crlb(snr, pos):
    mean = sum(pos) / len(pos)
    u = sum((d - mean) ** 2 for d in pos) / len(pos)
    return 1.0 / (2 * math.pi ** 2 * snr * u)


def tra(u0, snr, pos, n_grid):
    lobes = sidelobes(pos, u0, n_grid)
    probs = [outlier_p(snr, c, len(pos)) for _, c in lobes]
    return (1 - sum(probs)) * crlb(snr, pos) + sum(pk * (loc - u0) ** 2 for pk, (loc, _) in zip(probs, lobes))


def i0_series(x, terms=400):
    """exp(-x) I0(x) from the power series in 50-digit arithmetic."""
    with mpmath.workdps(50):
        x = mpmath.mpf(x)
        q = x * x / 4
        term = mpmath.mpf(1)
        total = mpmath.mpf(1)
        for k in range(1, terms):
            term = term * q / (k * k)
            total += term
        return float(total * mpmath.exp(-x))


def finite_difference_errors(model, x, t, loss_fn, grads, rng, n_params, step=1e-5):
    """Relative errors of analytic gradients against central differences.

    Parameters are drawn among those with a nonzero analytic gradient, so dead
    ReLU paths do not pad the count.
    """
    params = model.weights + model.biases
    analytic = grads[0] + grads[1]
    pool = [(h, idx) for h, g in enumerate(analytic) for idx in zip(*(abs(g) > 1e-12).nonzero())]
    errors = []
    for k in rng.choice(len(pool), size=min(n_params, len(pool)), replace=False):
        h, idx = pool[k]
        p = params[h]
        orig = p[idx]
        p[idx] = orig + step
        up = loss_fn()
        p[idx] = orig - step
        down = loss_fn()
        p[idx] = orig
        fd = (up - down) / (2 * step)
        an = analytic[h][idx]
        errors.append(abs(fd - an) / max(abs(fd), abs(an)))
    return errors
