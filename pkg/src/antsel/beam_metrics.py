"""Beampattern sidelobes, CRLB and the threshold-region MSE approximation.

Everything here is evaluated on a uniform grid of ``n_grid`` cell midpoints
over (-1, 1). The scalar functions (:func:`sidelobe_profile`, :func:`tra_mse`,
...) and the batched :func:`evaluate_candidates` used by the selectors share
one code path, :func:`metrics_from_field`, so they agree to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .array_core import ArrayGeometry
from .signal_model import as_positions, check_direction, diversity
from .special import bessel_i0_scaled

try:
    from . import _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None

DEFAULT_N_GRID = 2048
ANCHOR_CLAMP = 0.995
# complex grid samples held in memory per evaluation chunk
_CHUNK_ELEMENTS = 1 << 22


class DegenerateArrayError(ValueError):
    """Raised when a subarray has zero diversity, i.e. an unbounded CRLB."""


@dataclass(frozen=True)
class Sidelobe:
    location: float
    value: float
    correlation: float


@dataclass(frozen=True)
class BeampatternProfile:
    source: float
    peak_main: float
    sidelobes: tuple[Sidelobe, ...]
    grid_points: int

    @property
    def count(self) -> int:
        return len(self.sidelobes)


@dataclass(frozen=True)
class AnchorSet:
    anchors: tuple[float, ...]

    def __post_init__(self):
        anchors = tuple(float(a) for a in self.anchors)
        if not anchors:
            raise ValueError("anchor set must be non-empty")
        for a in anchors:
            check_direction(a)
        object.__setattr__(self, "anchors", anchors)

    @property
    def count(self) -> int:
        return len(self.anchors)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.anchors)


@lru_cache(maxsize=16)
def direction_grid(n_grid: int) -> np.ndarray:
    if n_grid < 3:
        raise ValueError("n_grid must be at least 3")
    grid = -1.0 + (2.0 * np.arange(n_grid) + 1.0) / n_grid
    grid.flags.writeable = False
    return grid


def beampattern(sub, u0, u):
    """|a(u)^H a(u0)|^2; ``u`` may be an array."""
    pos = as_positions(sub)
    du = np.asarray(u, dtype=float) - float(u0)
    af = np.exp(1j * np.pi * np.multiply.outer(du, pos)).sum(axis=-1)
    out = af.real ** 2 + af.imag ** 2
    return out if out.ndim else float(out)


def crlb(snr: float, sub) -> float:
    if not snr > 0:
        raise ValueError("SNR must be positive")
    u = diversity(sub)
    if u <= 0:
        raise DegenerateArrayError("zero array diversity: the CRLB is unbounded")
    return 1.0 / (2.0 * np.pi ** 2 * snr * u)


def outlier_probability(snr, corr, m):
    """Probability that noise moves the ML peak onto a sidelobe of correlation ``corr``."""
    snr = np.asarray(snr, dtype=float)
    corr = np.asarray(corr, dtype=float)
    if np.any(snr < 0):
        raise ValueError("SNR must be non-negative")
    if np.any(corr < 0) or np.any(corr > m):
        raise ValueError(f"correlation must lie in [0, M={m}]")
    x = snr * corr / (2.0 * m)
    out = 0.5 * np.exp(x - snr / 2.0) * bessel_i0_scaled(x)
    return out if np.ndim(out) else float(out)


def anchor_set(u_hat: float, delta_u: float, n_anchors: int = 5) -> AnchorSet:
    """Anchors spread uniformly over [u_hat - delta_u, u_hat + delta_u]."""
    if delta_u < 0:
        raise ValueError("delta_u must be non-negative")
    if n_anchors < 1 or n_anchors % 2 == 0:
        raise ValueError("n_anchors must be a positive odd integer")
    if n_anchors == 1:
        pts = np.array([u_hat], dtype=float)
    else:
        pts = u_hat + np.linspace(-1.0, 1.0, n_anchors) * delta_u
    return AnchorSet(tuple(np.clip(pts, -ANCHOR_CLAMP, ANCHOR_CLAMP)))


# --- batched core -----------------------------------------------------------

@dataclass(frozen=True)
class _Peaks:
    rows: np.ndarray
    location: np.ndarray
    correlation: np.ndarray


def _nearest_index(u0: np.ndarray, grid: np.ndarray) -> np.ndarray:
    h = grid[1] - grid[0]
    return np.clip(np.rint((u0 + 1.0) / h - 0.5).astype(np.int64), 0, grid.size - 1)


def _locate_sidelobes(power: np.ndarray, u0: np.ndarray, grid: np.ndarray):
    """Row/grid indices and refined locations of sidelobe peaks.

    The mainlobe spans the first local minima on either side of the grid
    point nearest ``u0``; edge samples never count as peaks.
    """
    r, n = power.shape
    h = grid[1] - grid[0]
    # work on the flattened rows; samples next to a row boundary are dropped below
    q = power.ravel()
    d = np.diff(q)
    rising = d > 0
    turn = np.flatnonzero(rising[:-1] != rising[1:]) + 1
    col = turn % n
    turn = turn[(col >= 1) & (col <= n - 2)]
    peak_keys = turn[rising[turn - 1] & (d[turn] < 0)]
    # two equal samples straddling a peak: keep the left one
    flat = np.flatnonzero(d[1:-1] == 0) + 1
    flat = flat[(d[flat - 1] > 0) & (d[flat + 1] < 0)]
    fcol = flat % n
    flat = flat[(fcol >= 1) & (fcol <= n - 3)]
    peak_keys = np.sort(np.concatenate((peak_keys, flat)))
    trough_keys = turn[~rising[turn - 1] & (d[turn] > 0)]

    j0 = _nearest_index(u0, grid)
    row_start = np.arange(r) * n
    key0 = row_start + j0
    i_lo = np.searchsorted(trough_keys, key0, side="left") - 1
    i_hi = np.searchsorted(trough_keys, key0, side="right")
    padded = np.concatenate(([-1], trough_keys, [r * n]))
    lo = padded[i_lo + 1]
    hi = padded[i_hi + 1]
    lo = np.where(lo >= row_start, lo, row_start - 1)
    hi = np.where(hi < row_start + n, hi, row_start + n)

    rows = peak_keys // n
    keys = peak_keys[(peak_keys < lo[rows]) | (peak_keys > hi[rows])]
    rows, cols = keys // n, keys % n
    vm, v0, vp = q[keys - 1], q[keys], q[keys + 1]
    offset = 0.5 * (vm - vp) / (vm - 2.0 * v0 + vp)
    return rows, grid[cols] + offset * h


def _correlations(pos: np.ndarray, u0: np.ndarray, rows: np.ndarray, loc: np.ndarray) -> np.ndarray:
    du = loc - u0[rows]
    af = np.exp(1j * np.pi * pos[rows] * du[:, None]).sum(axis=1)
    return np.minimum(np.abs(af), pos.shape[1])


def metrics_from_field(field: np.ndarray, u0: np.ndarray, pos: np.ndarray, grid: np.ndarray,
                       use_compiled: bool = True) -> _Peaks:
    """Sidelobe peaks of each row of a complex array-factor field.

    ``field[i]`` holds sum_m exp(i pi pos[i, m] (u - u0[i])) sampled on ``grid``.
    """
    if pos.shape[1] < 2:
        # a single element has a flat pattern; rounding must not create peaks
        empty = np.zeros(0)
        return _Peaks(empty.astype(np.int64), empty, empty)
    if _kernels is not None and use_compiled:
        power = _kernels.field_power(np.ascontiguousarray(field))
    else:
        power = np.abs(field)
        power *= power
    return peaks_from_power(power, u0, pos, grid, use_compiled)


def peaks_from_power(power: np.ndarray, u0: np.ndarray, pos: np.ndarray, grid: np.ndarray,
                     use_compiled: bool = True) -> _Peaks:
    if pos.shape[1] < 2:
        empty = np.zeros(0)
        return _Peaks(empty.astype(np.int64), empty, empty)
    if _kernels is not None and use_compiled:
        rows, cols, offs = _kernels.scan_power(power, _nearest_index(u0, grid))
        loc = grid[cols] + offs * (grid[1] - grid[0])
        corr = _kernels.correlations(np.ascontiguousarray(pos, dtype=float), u0, rows, loc)
        return _Peaks(rows, loc, corr)
    rows, loc = _locate_sidelobes(power, u0, grid)
    return _Peaks(rows, loc, _correlations(pos, u0, rows, loc))


def _field_direct(pos: np.ndarray, u0: np.ndarray, grid: np.ndarray) -> np.ndarray:
    out = np.zeros((pos.shape[0], grid.size), dtype=complex)
    for m in range(pos.shape[1]):
        out += np.exp(1j * np.pi * pos[:, m:m + 1] * (grid[None, :] - u0[:, None]))
    return out


def tra_from_peaks(peaks: _Peaks, n_rows: int, snr: float, m: int, u0: np.ndarray,
                   crlb_rows: np.ndarray, clamp: bool = False) -> np.ndarray:
    p = outlier_probability(snr, peaks.correlation, m)
    total_p = np.bincount(peaks.rows, weights=p, minlength=n_rows)
    outlier_mse = np.bincount(peaks.rows, weights=p * (peaks.location - u0[peaks.rows]) ** 2,
                              minlength=n_rows)
    coef = 1.0 - total_p
    if clamp:
        coef = np.maximum(coef, 0.0)
    return coef * crlb_rows + outlier_mse


def psl_from_peaks(peaks: _Peaks, n_rows: int, m: int) -> np.ndarray:
    out = np.zeros(n_rows)
    np.maximum.at(out, peaks.rows, peaks.correlation ** 2)
    return out / float(m * m)


def _crlb_rows(snr: float, pos: np.ndarray) -> np.ndarray:
    u = pos.var(axis=1)
    if np.any(u <= 0):
        raise DegenerateArrayError("zero array diversity: the CRLB is unbounded")
    return 1.0 / (2.0 * np.pi ** 2 * snr * u)


# --- scalar API ---------------------------------------------------------------

def _single(sub, u0_values, n_grid: int):
    if n_grid < 64:
        raise ValueError("n_grid must be at least 64")
    pos = as_positions(sub)
    u0 = np.asarray([check_direction(u) for u in np.atleast_1d(u0_values)])
    rows = np.repeat(pos[None, :], u0.size, axis=0)
    grid = direction_grid(n_grid)
    return pos, u0, rows, grid, metrics_from_field(_field_direct(rows, u0, grid), u0, rows, grid)


def sidelobe_profile(sub, u0: float, n_grid: int = DEFAULT_N_GRID) -> BeampatternProfile:
    pos, u0a, _, _, peaks = _single(sub, [u0], n_grid)
    lobes = tuple(Sidelobe(float(loc), float(c * c), float(c))
                  for loc, c in zip(peaks.location, peaks.correlation))
    return BeampatternProfile(source=float(u0a[0]), peak_main=float(pos.size ** 2),
                              sidelobes=lobes, grid_points=n_grid)


def psl(profile: BeampatternProfile) -> float:
    if profile.count == 0:
        return 0.0
    return max(s.value for s in profile.sidelobes) / profile.peak_main


def tra_mse(u0: float, snr: float, sub, n_grid: int = DEFAULT_N_GRID, clamp: bool = False) -> float:
    """Threshold-region MSE approximation at source direction ``u0``."""
    return float(_tra_many(sub, [u0], snr, n_grid, clamp)[0])


def _tra_many(sub, u0_values, snr: float, n_grid: int, clamp: bool) -> np.ndarray:
    if not snr > 0:
        raise ValueError("SNR must be positive")
    pos, u0, rows, _, peaks = _single(sub, u0_values, n_grid)
    base = np.full(u0.size, crlb(snr, pos))
    return tra_from_peaks(peaks, u0.size, snr, pos.size, u0, base, clamp)


def worst_case_tra(anchors: AnchorSet, snr: float, sub, n_grid: int = DEFAULT_N_GRID,
                   clamp: bool = False) -> float:
    return float(np.max(_tra_many(sub, anchors.anchors, snr, n_grid, clamp)))


# --- candidate batches --------------------------------------------------------

@dataclass(frozen=True)
class CandidateMetrics:
    """Per-candidate, per-anchor metrics; arrays have shape (candidates, anchors)."""

    tra: np.ndarray
    psl: np.ndarray
    n_sidelobes: np.ndarray

    @property
    def worst_tra(self) -> np.ndarray:
        return self.tra.max(axis=1)


@lru_cache(maxsize=8)
def _element_field(n: int, spacing: float, n_grid: int) -> np.ndarray:
    grid = direction_grid(n_grid)
    return np.exp(1j * np.pi * spacing * np.outer(np.arange(n), grid))


def element_phases(geometry: ArrayGeometry, anchors: np.ndarray) -> np.ndarray:
    """exp(-i pi d_k u0_a), shape (anchors, N)."""
    return np.exp(-1j * np.pi * np.outer(anchors, geometry.positions))


def evaluate_candidates(bits: np.ndarray, geometry: ArrayGeometry, anchors: AnchorSet, snr: float,
                        n_grid: int = DEFAULT_N_GRID, clamp: bool = False,
                        need_tra: bool = True) -> CandidateMetrics:
    """TRA, PSL and sidelobe counts for every candidate selection at every anchor.

    ``bits`` is a (candidates, N) 0/1 array; all rows must select the same M.
    """
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != geometry.n_antennas:
        raise ValueError("bits must have shape (candidates, n_antennas)")
    m_counts = bits.sum(axis=1)
    if bits.shape[0] and np.any(m_counts != m_counts[0]):
        raise ValueError("all candidates must select the same number of antennas")
    if need_tra and not snr > 0:
        raise ValueError("SNR must be positive")
    n_cand, n_anchor = bits.shape[0], anchors.count
    m = int(m_counts[0]) if n_cand else 0
    grid = direction_grid(n_grid)
    efield = _element_field(geometry.n_antennas, float(geometry.spacing), n_grid)
    phases = element_phases(geometry, anchors.as_array())
    u0_all = anchors.as_array()

    tra = np.zeros((n_cand, n_anchor))
    pk = np.zeros((n_cand, n_anchor))
    ks = np.zeros((n_cand, n_anchor), dtype=np.int64)
    idx = np.nonzero(bits)[1].reshape(n_cand, m) if n_cand else np.zeros((0, 0), dtype=np.int64)
    chunk = max(1, _CHUNK_ELEMENTS // (n_grid * n_anchor))
    for start in range(0, n_cand, chunk):
        sl = slice(start, min(start + chunk, n_cand))
        b = bits[sl].astype(float)
        weights = (b[:, None, :] * phases[None, :, :]).reshape(-1, geometry.n_antennas)
        field = weights @ efield
        pos = np.repeat(idx[sl] * float(geometry.spacing), n_anchor, axis=0)
        u0 = np.tile(u0_all, b.shape[0])
        peaks = metrics_from_field(field, u0, pos, grid)
        rows = field.shape[0]
        pk[sl] = psl_from_peaks(peaks, rows, m).reshape(-1, n_anchor)
        ks[sl] = np.bincount(peaks.rows, minlength=rows).reshape(-1, n_anchor)
        if need_tra:
            base = _crlb_rows(snr, pos)
            tra[sl] = tra_from_peaks(peaks, rows, snr, m, u0, base, clamp).reshape(-1, n_anchor)
    return CandidateMetrics(tra=tra, psl=pk, n_sidelobes=ks)
