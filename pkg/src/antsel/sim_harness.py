"""Monte Carlo experiments: MSE versus SNR per selection method, and sequential selection."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .array_core import ArrayGeometry
from .beam_metrics import ANCHOR_CLAMP, DEFAULT_N_GRID, crlb
from .estimator import SnapshotEstimator
from .estimators import make_selector
from .selector import select_ula
from .signal_model import SignalParams, db_to_linear, snapshot_from_noise, unit_noise

SWEEP_HEADER = ("snr_db", "method", "mse", "trials", "crlb_ref")
SEQUENTIAL_HEADER = ("measurement", "snr_db", "method", "mse", "trials")


@dataclass(frozen=True)
class SimConfig:
    n_antennas: int = 21
    spacing: float = 0.5
    m_target: int = 4
    methods: tuple[str, ...] = ("tra-g", "psl-c", "ula")
    snr_db_points: tuple[float, ...] = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    trials: int = 500
    delta_u: float = 0.1
    n_anchors: int = 5
    u_source_range: tuple[float, float] = (-0.9, 0.9)
    master_seed: int = 0
    n_grid: int = DEFAULT_N_GRID
    coupled: bool = True
    model_path: str | None = None
    n_measurements: int = 5
    clamp: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        if not all(math.isfinite(s) for s in self.snr_db_points) or not self.snr_db_points:
            raise ValueError("snr_db_points must be finite and non-empty")
        lo, hi = self.u_source_range
        if not -1.0 < lo <= hi < 1.0:
            raise ValueError("u_source_range must lie inside (-1, 1)")
        if self.delta_u < 0:
            raise ValueError("delta_u must be non-negative")
        if self.n_measurements < 1:
            raise ValueError("n_measurements must be at least 1")
        ArrayGeometry(self.n_antennas, self.spacing)

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.n_antennas, self.spacing)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_list(conv):
    return lambda text: tuple(conv(p.strip()) for p in text.split(",") if p.strip())


_PARSERS = {
    "n_antennas": int,
    "spacing": float,
    "m_target": int,
    "methods": _parse_list(str),
    "snr_db_points": _parse_list(float),
    "trials": int,
    "delta_u": float,
    "n_anchors": int,
    "u_source_range": _parse_list(float),
    "master_seed": int,
    "n_grid": int,
    "coupled": _parse_bool,
    "model_path": str,
    "n_measurements": int,
    "clamp": _parse_bool,
}


def parse_config(text: str, **overrides) -> SimConfig:
    """Build a :class:`SimConfig` from ``key = value`` lines; ``#`` starts a comment.

    Keyword overrides that are not ``None`` take precedence over the file.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        if key not in _PARSERS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](val.strip())
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key}: {exc}") from None
    for key, val in overrides.items():
        if key not in _PARSERS:
            raise ValueError(f"unknown key {key!r}")
        if val is not None:
            values[key] = val
    if "u_source_range" in values and len(values["u_source_range"]) != 2:
        raise ValueError("u_source_range needs two values")
    return SimConfig(**values)


def load_config(path, **overrides) -> SimConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), **overrides)


def sample_prior(u_true: float, delta_u: float, rng: np.random.Generator) -> float:
    """Uniform draw in ``[u_true - delta_u, u_true + delta_u]``, clamped into the anchor range."""
    if delta_u < 0:
        raise ValueError("delta_u must be non-negative")
    u = u_true + delta_u * (2.0 * rng.random() - 1.0)
    return float(min(max(u, -ANCHOR_CLAMP), ANCHOR_CLAMP))


@dataclass(frozen=True)
class CurvePoint:
    snr_db: float
    method: str
    mse: float
    trials_used: int
    crlb_ref: float
    crlb_mean: float = math.nan
    flagged: int = 0
    errors: np.ndarray = field(default=None, repr=False, compare=False)
    u_true: np.ndarray = field(default=None, repr=False, compare=False)


@dataclass(frozen=True)
class SequentialPoint:
    measurement: int
    snr_db: float
    method: str
    mse: float
    trials_used: int
    crlb_mean: float = math.nan
    errors: np.ndarray = field(default=None, repr=False, compare=False)


class _Estimators:
    """Estimators cached by selection mask."""

    def __init__(self, geometry: ArrayGeometry):
        self.geometry = geometry
        self._cache: dict[int, SnapshotEstimator] = {}

    def get(self, chosen) -> SnapshotEstimator:
        est = self._cache.get(chosen.mask)
        if est is None:
            if len(self._cache) > 20000:
                self._cache.clear()
            est = self._cache[chosen.mask] = SnapshotEstimator(np.asarray(chosen.indices) * self.geometry.spacing)
        return est


def _measure(chosen, u_true: float, snr: float, noise: np.ndarray, ests: _Estimators) -> tuple[float, float]:
    est = ests.get(chosen)
    idx = np.asarray(chosen.indices)
    params = SignalParams.for_snr(snr, idx.size)
    y = snapshot_from_noise(params, est.positions, u_true, noise[idx]).observation
    u_est = est.estimate(y)
    return u_est, crlb(snr, est.positions)


def _draw(cfg: SimConfig, rng: np.random.Generator):
    lo, hi = cfg.u_source_range
    u_true = float(rng.uniform(lo, hi))
    u_hat = sample_prior(u_true, cfg.delta_u, rng)
    return u_true, u_hat, unit_noise(rng, cfg.n_antennas)


def _selectors(cfg: SimConfig):
    g = cfg.geometry
    return [make_selector(m, g, cfg.m_target, cfg.delta_u, cfg.n_anchors, cfg.n_grid,
                          model_path=cfg.model_path, clamp=cfg.clamp)
            for m in cfg.methods]


def reference_crlb(cfg: SimConfig, snr: float) -> float:
    """CRLB of the maximum-diversity layout, the best bound any subarray reaches."""
    sel = make_selector("psl-c:1", cfg.geometry, cfg.m_target, n_grid=cfg.n_grid)
    # objective at 0 dB is the unit-SNR bound
    return sel.select(0.0, 0.0).objective / snr


def _sweep_one_snr(cfg: SimConfig, snr_idx: int) -> list[CurvePoint]:
    snr_db = float(cfg.snr_db_points[snr_idx])
    snr = float(db_to_linear(snr_db))
    sels = _selectors(cfg)
    ests = _Estimators(cfg.geometry)
    k = len(sels)
    err = np.empty((k, cfg.trials))
    bound = np.empty((k, cfg.trials))
    u_log = np.empty((k, cfg.trials))
    flagged = np.zeros(k, dtype=int)
    for t in range(cfg.trials):
        shared = _draw(cfg, np.random.default_rng([cfg.master_seed, snr_idx, t])) if cfg.coupled else None
        for i, sel in enumerate(sels):
            if shared is None:
                u_true, u_hat, noise = _draw(cfg, np.random.default_rng([cfg.master_seed, snr_idx, i, t]))
            else:
                u_true, u_hat, noise = shared
            res = sel.select(u_hat, snr_db)
            flagged[i] += res.flagged
            u_est, bound[i, t] = _measure(res.chosen, u_true, snr, noise, ests)
            err[i, t] = (u_est - u_true) ** 2
            u_log[i, t] = u_true
    ref = reference_crlb(cfg, snr)
    return [CurvePoint(snr_db, m, float(err[i].mean()), cfg.trials, ref, float(bound[i].mean()),
                       int(flagged[i]), err[i], u_log[i])
            for i, m in enumerate(cfg.methods)]


def _run(task, cfg: SimConfig, workers: int):
    n = len(cfg.snr_db_points)
    if workers <= 1 or n == 1:
        chunks = [task(cfg, i) for i in range(n)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            # map preserves order, so the reduction is deterministic
            chunks = list(pool.map(task, [cfg] * n, range(n)))
    return [p for chunk in chunks for p in chunk]


def run_mse_sweep(cfg: SimConfig, workers: int = 1) -> list[CurvePoint]:
    """Mean squared direction error per (SNR point, method).

    Every method sees the same source direction, prior and noise draw in a
    given trial unless ``cfg.coupled`` is false.
    """
    return _run(_sweep_one_snr, cfg, workers)


def _sequential_one_snr(cfg: SimConfig, snr_idx: int) -> list[SequentialPoint]:
    snr_db = float(cfg.snr_db_points[snr_idx])
    snr = float(db_to_linear(snr_db))
    g = cfg.geometry
    sels = _selectors(cfg)
    ula = select_ula(g, cfg.m_target)
    ests = _Estimators(g)
    n_meas = cfg.n_measurements
    out = []
    for i, (method, sel) in enumerate(zip(cfg.methods, sels)):
        err = np.empty((n_meas, cfg.trials))
        bound = np.empty((n_meas, cfg.trials))
        for t in range(cfg.trials):
            key = [cfg.master_seed, snr_idx, t] if cfg.coupled else [cfg.master_seed, snr_idx, i, t]
            rng = np.random.default_rng(key)
            lo, hi = cfg.u_source_range
            u_true = float(rng.uniform(lo, hi))
            u_prev = None
            for k in range(n_meas):
                noise = unit_noise(rng, cfg.n_antennas)
                if k == 0:
                    chosen = ula
                else:
                    u_prior = min(max(u_prev, -ANCHOR_CLAMP), ANCHOR_CLAMP)
                    chosen = sel.select(u_prior, snr_db).chosen
                u_prev, bound[k, t] = _measure(chosen, u_true, snr, noise, ests)
                err[k, t] = (u_prev - u_true) ** 2
        out.extend(SequentialPoint(k + 1, snr_db, method, float(err[k].mean()), cfg.trials,
                                   float(bound[k].mean()), err[k]) for k in range(n_meas))
    return out


def run_sequential(cfg: SimConfig, n_measurements: int | None = None, workers: int = 1) -> list[SequentialPoint]:
    """Repeated measurements: a ULA first, then selection driven by the previous estimate."""
    if n_measurements is not None:
        cfg = dataclasses.replace(cfg, n_measurements=n_measurements)
    return _run(_sequential_one_snr, cfg, workers)


def paired_bootstrap_confidence(a, b, rng: np.random.Generator, n_boot: int = 2000) -> float:
    """Fraction of paired bootstrap resamples in which ``mean(a) < mean(b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim != 1 or a.shape != b.shape or a.size == 0:
        raise ValueError("a and b must be equal-length non-empty 1-D samples")
    d = a - b
    idx = rng.integers(0, d.size, size=(n_boot, d.size))
    return float(np.mean(d[idx].mean(axis=1) < 0.0))


def bootstrap_se(x, rng: np.random.Generator, n_boot: int = 2000) -> float:
    x = np.asarray(x, dtype=float)
    idx = rng.integers(0, x.size, size=(n_boot, x.size))
    return float(x[idx].mean(axis=1).std(ddof=1))


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".10g")


def format_csv(records) -> str:
    """Sweep or sequential records as CSV text with 10 significant digits, in the given order."""
    records = list(records)
    if not records:
        raise ValueError("no records to export")
    if isinstance(records[0], SequentialPoint):
        header = SEQUENTIAL_HEADER
        rows = [(r.measurement, r.snr_db, r.method, r.mse, r.trials_used) for r in records]
    else:
        header = SWEEP_HEADER
        rows = [(r.snr_db, r.method, r.mse, r.trials_used, r.crlb_ref) for r in records]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def export_csv(records, destination) -> None:
    text = format_csv(records)
    with open(destination, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
