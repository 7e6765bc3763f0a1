"""Antenna selection strategies and their multiplication-count accounting."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .array_core import (
    ArrayGeometry,
    SelectionVector,
    align_masks,
    greedy_evaluation_count,
    masks_to_bits,
    positions_from_selection,
    unique_masks,
)
from .beam_metrics import (
    DEFAULT_N_GRID,
    AnchorSet,
    _Peaks,
    _crlb_rows,
    _nearest_index,
    _element_field,
    crlb,
    direction_grid,
    element_phases,
    evaluate_candidates,
    _kernels,
    peaks_from_power,
    tra_from_peaks,
)

DEFAULT_BESSEL_COST = 30
DEFAULT_MAX_CANDIDATES = 50_000


class SelectionBudgetError(RuntimeError):
    """The unique candidate set is larger than the configured cap."""


@dataclass(frozen=True)
class SelectionQuery:
    anchors: AnchorSet
    snr: float
    geometry: ArrayGeometry
    m_target: int
    n_grid: int = DEFAULT_N_GRID
    clamp: bool = False

    def __post_init__(self):
        if not 2 <= self.m_target <= self.geometry.n_antennas:
            raise ValueError(f"m_target must be in [2, {self.geometry.n_antennas}], got {self.m_target}")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if self.n_grid < 64:
            raise ValueError("n_grid must be at least 64")


@dataclass(frozen=True)
class SelectionResult:
    chosen: SelectionVector
    objective: float
    evaluations: int
    mult_count: int
    flagged: bool = False
    path: tuple[SelectionVector, ...] = field(default=(), compare=False)

    def positions(self, geometry: ArrayGeometry) -> np.ndarray:
        return positions_from_selection(self.chosen, geometry).as_array()


def _tra_cost(n: int, n_grid: int, n_sidelobes, bessel_cost: int = DEFAULT_BESSEL_COST) -> int:
    k = np.asarray(n_sidelobes, dtype=np.int64)
    return int(np.sum(2 * n * n_grid + n + k * (2 * n + 2 + bessel_cost)))


def _lex(mask: int, n: int) -> tuple[int, ...]:
    return tuple((mask >> i) & 1 for i in range(n))


def select_exhaustive_tra(q: SelectionQuery, max_candidates: int = DEFAULT_MAX_CANDIDATES) -> SelectionResult:
    """Minimize the worst-case TRA over the whole unique subarray set.

    Every candidate is first scored at the central anchor, which bounds its
    worst case from below. Candidates are then fully evaluated in order of
    that bound until the bound exceeds the best worst case found, so the
    result equals a full evaluation.
    """
    g = q.geometry
    n = g.n_antennas
    if q.m_target == n:
        full = np.ones((1, n), dtype=np.int8)
        cm = evaluate_candidates(full, g, q.anchors, q.snr, q.n_grid, q.clamp)
        return SelectionResult(SelectionVector(tuple(full[0])), float(cm.worst_tra[0]), 1,
                               _tra_cost(n, q.n_grid, cm.n_sidelobes))
    masks = unique_masks(n, q.m_target)
    if masks.size > max_candidates:
        raise SelectionBudgetError(f"{masks.size} unique candidates exceed the cap of {max_candidates}")
    bits = masks_to_bits(masks, n)
    anchors = q.anchors.anchors
    mid = len(anchors) // 2
    first = evaluate_candidates(bits, g, AnchorSet((anchors[mid],)), q.snr, q.n_grid, q.clamp)
    bound = first.tra[:, 0]
    mults = _tra_cost(n, q.n_grid, first.n_sidelobes)
    worst = bound.copy()
    rest = anchors[:mid] + anchors[mid + 1:]
    if rest:
        others = AnchorSet(rest)
        order = np.argsort(bound, kind="stable")
        best = math.inf
        start = 0
        step = 32
        while start < order.size and bound[order[start]] <= best:
            sel = order[start:start + step]
            cm = evaluate_candidates(bits[sel], g, others, q.snr, q.n_grid, q.clamp)
            worst[sel] = np.maximum(bound[sel], cm.worst_tra)
            mults += _tra_cost(n, q.n_grid, cm.n_sidelobes)
            best = min(best, float(worst[sel].min()))
            start += sel.size
            step = min(2 * step, 1024)
        # candidates never fully evaluated have a bound, and so a worst case, above best
        worst[order[start:]] = np.inf
    # the unique set is lexicographically sorted, so argmin already breaks ties
    best_i = int(np.argmin(worst))
    return SelectionResult(SelectionVector(tuple(bits[best_i])), float(worst[best_i]), int(masks.size), mults)


def select_greedy_tra(q: SelectionQuery) -> SelectionResult:
    """Remove one antenna per round, keeping the removal with the lowest worst-case TRA.

    Candidates that are translations or mirror images of each other share
    their metrics, so each round evaluates one representative per aligned key.
    """
    g = q.geometry
    n = g.n_antennas
    if q.m_target >= n:
        raise ValueError("greedy selection needs m_target < n_antennas")
    grid = direction_grid(q.n_grid)
    efield = _element_field(n, float(g.spacing), q.n_grid)
    u0 = q.anchors.as_array()
    n_anchor = u0.size
    phases = element_phases(g, u0)
    # per-element contribution at every anchor, shape (N, anchors, grid)
    element = np.ascontiguousarray(phases.T)[:, :, None] * efield[:, None, :]
    current = list(range(n))
    cur_field = element.sum(axis=0)
    j0 = _nearest_index(u0, grid)
    evaluations = 0
    mults = 0
    objective = math.nan
    path = [SelectionVector((1,) * n)]

    while len(current) > q.m_target:
        m = len(current)
        cur_mask = sum(1 << i for i in current)
        cand_masks = np.array([cur_mask & ~(1 << k) for k in current], dtype=np.int64)
        keys = align_masks(cand_masks, n)
        uniq_keys, rep, inverse = np.unique(keys, return_index=True, return_inverse=True)
        removed = np.asarray(current)[rep]

        cur_arr = np.asarray(current)
        keep = cur_arr[None, :] != removed[:, None]
        pos = np.broadcast_to(cur_arr, keep.shape)[keep].reshape(removed.size, m - 1) * float(g.spacing)
        pos = np.repeat(pos, n_anchor, axis=0)
        u0_rows = np.tile(u0, removed.size)
        rows = removed.size * n_anchor
        if _kernels is not None and m - 1 >= 2:
            r_idx, cols, offs = _kernels.removal_peaks(cur_field, element, removed, j0)
            loc = grid[cols] + offs * (grid[1] - grid[0])
            corr = _kernels.correlations(pos, u0_rows, r_idx, loc)
            peaks = _Peaks(r_idx, loc, corr)
        else:
            power = np.abs(cur_field[None, :, :] - element[removed]).reshape(-1, grid.size) ** 2
            peaks = peaks_from_power(power, u0_rows, pos, grid, use_compiled=False)
        tra = tra_from_peaks(peaks, rows, q.snr, m - 1, u0_rows, _crlb_rows(q.snr, pos), q.clamp)
        worst = tra.reshape(-1, n_anchor).max(axis=1)
        n_side = np.bincount(peaks.rows, minlength=rows).reshape(-1, n_anchor)

        evaluations += m
        counts = np.bincount(inverse, minlength=uniq_keys.size)
        mults += _tra_cost(n, q.n_grid, n_side * counts[:, None])

        best_val = worst.min()
        tied = np.flatnonzero(worst == best_val)
        best_key = min((int(uniq_keys[t]) for t in tied), key=lambda k: _lex(k, n))
        members = [i for i, k in enumerate(keys) if k == best_key]
        pick = min(members, key=lambda i: _lex(int(cand_masks[i]), n))

        drop = current[pick]
        cur_field = cur_field - element[drop]
        current.remove(drop)
        objective = float(best_val)
        path.append(SelectionVector.from_indices(current, n))

    return SelectionResult(path[-1], objective, evaluations, mults, path=tuple(path))


def select_psl_c(q: SelectionQuery, delta: float = 1.0) -> SelectionResult:
    """Minimum-CRLB unique candidate whose PSL at the first anchor is at most ``delta``.

    When no candidate is feasible the lowest-PSL candidate is returned and
    the result is flagged.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    g = q.geometry
    n, m = g.n_antennas, q.m_target
    masks = unique_masks(n, m)
    bits = masks_to_bits(masks, n)
    idx = np.arange(n, dtype=np.int64)
    # M * sum(k^2) - (sum k)^2 is M^2 times the index variance, exact in integers
    spread = m * (bits @ (idx * idx)) - (bits @ idx) ** 2
    flagged = False
    if delta >= 1.0:
        feasible = np.ones(masks.size, dtype=bool)
    else:
        u_ref = AnchorSet((q.anchors.anchors[0],))
        levels = evaluate_candidates(bits, g, u_ref, q.snr, q.n_grid, need_tra=False).psl[:, 0]
        feasible = levels <= delta
    n_feasible = int(feasible.sum())
    if n_feasible:
        score = np.where(feasible, spread, -1)
        best = int(np.argmax(score))
    else:
        best = int(np.argmin(levels))
        flagged = True
    chosen = SelectionVector(tuple(bits[best]))
    objective = crlb(q.snr, positions_from_selection(chosen, g).as_array())
    mults = multiplication_count(Method.PSL_C, n=n, m=m, total=math.comb(n, m), feasible=n_feasible)
    return SelectionResult(chosen, objective, int(masks.size), mults, flagged=flagged)


def select_ula(g: ArrayGeometry, m: int) -> SelectionVector:
    """Half-wavelength-spaced comb starting at antenna 0."""
    if not 1 <= m <= g.n_antennas:
        raise ValueError(f"M must be in [1, {g.n_antennas}]")
    step = max(1, int(round(1.0 / g.spacing))) if g.spacing <= 0.5 else 1
    if (m - 1) * step >= g.n_antennas:
        raise ValueError(f"a {m}-element half-wavelength comb does not fit in {g.n_antennas} antennas")
    return SelectionVector.from_indices(range(0, (m - 1) * step + 1, step), g.n_antennas)


class Method(enum.Enum):
    PSL_C = "psl-c"
    TRA_G = "tra-g"
    TRA_DL = "tra-dl"


def _need(params: dict, *names):
    missing = [k for k in names if params.get(k) is None]
    if missing:
        raise ValueError(f"missing parameter(s) for multiplication count: {', '.join(missing)}")
    return [params[k] for k in names]


def multiplication_count(method, **params) -> int:
    """Multiplications of one selection.

    PSL_C needs ``n, m, total, feasible``; TRA_G needs ``n, n_grid, n_sidelobes``
    and either ``evaluations`` or ``m`` (``bessel_cost`` defaults to 30);
    TRA_DL needs ``layer_dims`` (input and output included).
    """
    method = Method(method) if not isinstance(method, Method) else method
    if method is Method.PSL_C:
        n, m, total, feasible = _need(params, "n", "m", "total", "feasible")
        return 6 * n + m * total + 4 * m * feasible
    if method is Method.TRA_G:
        n, n_grid, k = _need(params, "n", "n_grid", "n_sidelobes")
        evals = params.get("evaluations")
        if evals is None:
            (m,) = _need(params, "m")
            evals = greedy_evaluation_count(n, m)
        delta_b = params.get("bessel_cost", DEFAULT_BESSEL_COST)
        return int(evals) * (2 * n * n_grid + n + int(k) * (2 * n + 2 + delta_b))
    (dims,) = _need(params, "layer_dims")
    dims = list(dims)
    if len(dims) < 2:
        raise ValueError("layer_dims needs at least input and output sizes")
    return sum(a * b for a, b in zip(dims[:-1], dims[1:]))
