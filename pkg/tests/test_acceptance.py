"""End-to-end acceptance checks.

Each test records one PASS/FAIL line; the lines are repeated in the terminal
summary. Tolerances are fixed and never relaxed.
"""
import subprocess
import sys
import time

import numpy as np
import pytest

import oracles
from antsel.array_core import ArrayGeometry, SelectionVector, align_layout, greedy_evaluation_count
from antsel.beam_metrics import (AnchorSet, anchor_set, crlb, outlier_probability, psl, sidelobe_profile, tra_mse,
                                 worst_case_tra)
from antsel.cli import reproduce_table1
from antsel.estimators import NeuralSelector, PSLConstrainedSelector
from antsel.neural import batch_loss, gradients, init_model, normalize_inputs, default_layer_dims
from antsel.selector import SelectionQuery, select_greedy_tra
from antsel.signal_model import db_to_linear
from antsel.sim_harness import SimConfig, paired_bootstrap_confidence, run_mse_sweep, run_sequential
from antsel.special import bessel_i0_scaled

# N, M, F, F_unique, ratio, G, S, S_unique
TABLE1 = [
    (11, 2, 55, 10, 0.1818, 63, 22, 11),
    (11, 4, 330, 70, 0.2121, 56, 44, 21),
    (11, 6, 462, 136, 0.2944, 45, 66, 27),
    (21, 4, 5985, 615, 0.1028, 221, 84, 46),
    (21, 6, 54264, 7872, 0.1451, 210, 126, 72),
    (21, 8, 203490, 38970, 0.1915, 195, 168, 90),
]


def test_criterion_01_table1(verdict):
    t0 = time.perf_counter()
    rows = [ln.split(",") for ln in reproduce_table1().splitlines()[1:]]
    elapsed = time.perf_counter() - t0
    got = {(int(r[0]), int(r[1])): r for r in rows}
    bad = []
    for n, m, f, fu, ratio, g, s, su in TABLE1:
        r = got.get((n, m))
        if r is None or [int(r[i]) for i in (2, 3, 5, 6, 7)] != [f, fu, g, s, su] or abs(float(r[4]) - ratio) > 1e-4:
            bad.append((n, m))
    ok = not bad and len(rows) == len(TABLE1) and elapsed < 60
    verdict("criterion 1 unique-set table", ok, f"{36 - 6 * len(bad)}/36 numbers match, {elapsed:.1f} s")
    assert ok


def test_criterion_02_psl_c_layout(verdict):
    t0 = time.perf_counter()
    sel = PSLConstrainedSelector(n_antennas=21, m_target=6, delta=1.0).fit()
    pos = sel.select(0.0, 10.0).positions(ArrayGeometry(21, 0.5))
    elapsed = time.perf_counter() - t0
    ok = pos.tolist() == [0, 0.5, 1, 9, 9.5, 10] and elapsed < 30
    verdict("criterion 2 CRLB-optimal layout", ok, f"positions {pos.tolist()}, {elapsed:.1f} s")
    assert ok


def test_criterion_03_greedy_count(verdict):
    wrong = []
    checked = 0
    for n in range(3, 25):
        g = ArrayGeometry(n, 0.5)
        for m in range(2, n):
            # the count does not depend on grid size or anchors
            res = select_greedy_tra(SelectionQuery(AnchorSet((0.1,)), 10.0, g, m, n_grid=64))
            expected = (n + m + 1) * (n - m) // 2
            checked += 1
            if res.evaluations != expected or greedy_evaluation_count(n, m) != expected:
                wrong.append((n, m, res.evaluations))
    ok = not wrong
    verdict("criterion 3 greedy count", ok, f"{checked - len(wrong)}/{checked} (N, M) pairs exact")
    assert ok


def test_criterion_04_tra_dl_mults(verdict):
    model = init_model(default_layer_dims(21), np.random.default_rng(0))
    count = NeuralSelector.from_model(model, m_target=4).select(0.2, 10.0).mult_count
    ok = count == 5488
    verdict("criterion 4 TRA-DL multiplications", ok, f"counted {count}")
    assert ok


def test_criterion_05_analytic_limits(verdict):
    rng = np.random.default_rng(5)
    p0 = [outlier_probability(0.0, c, m) for m in range(2, 22) for c in rng.uniform(0, m, 20)]
    p0_ok = all(p == 0.5 for p in p0)

    # layouts whose pattern has no sidelobe inside the visible region
    gaps = []
    while len(gaps) < 50:
        m = int(rng.integers(2, 4))
        pos = np.sort(rng.choice(6, size=m, replace=False)) * 0.5
        u0 = float(rng.uniform(-0.5, 0.5))
        if sidelobe_profile(pos, u0).count == 0:
            snr = float(db_to_linear(rng.uniform(-10, 30)))
            gaps.append(abs(tra_mse(u0, snr, pos) - crlb(snr, pos)))
    tra_ok = max(gaps) <= 1e-12

    x = np.linspace(0.0, 100.0, 1000)
    ref = np.array([oracles.i0_series(v) for v in x])
    rel = np.max(np.abs(bessel_i0_scaled(x) - ref) / ref)
    ok = p0_ok and tra_ok and rel <= 1e-10
    verdict("criterion 5 analytic limits", ok,
            f"P(S=0) exact {p0_ok}, max |TRA-CRLB| {max(gaps):.1e}, I0 rel err {rel:.1e}")
    assert ok


def test_criterion_06_gradients(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    errors = []
    for _ in range(10):
        m = init_model(default_layer_dims(21), rng)
        for b in m.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x = normalize_inputs(rng.uniform(-0.9, 0.9, 8), rng.uniform(-10, 20, 8))
        t = (rng.random((8, 21)) < 0.2).astype(float)
        errors += oracles.finite_difference_errors(m, x, t, lambda: batch_loss(m, x, t), gradients(m, x, t), rng, 5)
    elapsed = time.perf_counter() - t0
    ok = len(errors) >= 50 and max(errors) < 1e-4 and elapsed < 10
    verdict("criterion 6 gradients", ok, f"{len(errors)} parameters, max rel err {max(errors):.1e}, {elapsed:.1f} s")
    assert ok


FIG2 = SimConfig(n_antennas=21, spacing=0.5, m_target=4, delta_u=0.1, n_anchors=5,
                 methods=("tra-g", "psl-c:1", "ula"), snr_db_points=(0.0, 5.0, 25.0, 30.0), trials=2000,
                 master_seed=0, coupled=True)


@pytest.fixture(scope="module")
def fig2():
    t0 = time.perf_counter()
    recs = run_mse_sweep(FIG2)
    return {(r.snr_db, r.method): r for r in recs}, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_07a_low_snr_ordering(verdict, fig2):
    recs, elapsed = fig2
    parts, ok = [], elapsed < 600
    for snr in (0.0, 5.0):
        g, p = recs[snr, "tra-g"], recs[snr, "psl-c:1"]
        conf = paired_bootstrap_confidence(g.errors, p.errors, np.random.default_rng(7))
        ok &= conf >= 0.95
        parts.append(f"{snr:g} dB: TRA-G {g.mse:.3g} vs PSL-C {p.mse:.3g}, confidence {conf:.3f}")
    verdict("criterion 7(a) low-SNR ordering", ok, "; ".join(parts) + f"; sweep {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_07b_high_snr_bound(verdict, fig2):
    recs, elapsed = fig2
    parts, ok = [], elapsed < 600
    for snr in (25.0, 30.0):
        for method in FIG2.methods:
            r = recs[snr, method]
            ratio = r.mse / r.crlb_mean
            ok &= 1 / 3 <= ratio <= 3
            parts.append(f"{method}@{snr:g} {ratio:.2f}")
    verdict("criterion 7(b) high-SNR MSE/CRLB", ok, "ratios " + ", ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_08_sequential(verdict):
    cfg = SimConfig(m_target=6, methods=("tra-g",), snr_db_points=(15.0,), trials=2000, master_seed=0)
    t0 = time.perf_counter()
    pts = run_sequential(cfg, n_measurements=5)
    elapsed = time.perf_counter() - t0
    mse = {p.measurement: p.mse for p in pts}
    ok = abs(mse[3] - mse[5]) <= 0.1 * mse[5] and elapsed < 300
    verdict("criterion 8 sequential convergence", ok,
            "MSE by measurement " + ", ".join(f"{k}: {v:.3g}" for k, v in sorted(mse.items())) + f", {elapsed:.0f} s")
    assert ok


def test_criterion_09_equivalence_classes(verdict):
    rng = np.random.default_rng(9)
    n = 21
    worst = 0.0
    pairs = 0
    while pairs < 200:
        idx = rng.choice(n, size=int(rng.integers(2, 9)), replace=False)
        b = SelectionVector.from_indices(idx.tolist(), n)
        a = align_layout(b)
        if a == b:
            continue
        pairs += 1
        lo = int(idx.min())
        mirrored = a.bits != b.bits[lo:] + (0,) * lo
        u_hat = float(rng.uniform(-0.85, 0.85))
        ua = -u_hat if mirrored else u_hat
        snr = float(db_to_linear(rng.uniform(-10, 30)))
        pa, pb = np.asarray(a.indices) * 0.5, np.asarray(b.indices) * 0.5
        d_psl = abs(psl(sidelobe_profile(pa, ua)) - psl(sidelobe_profile(pb, u_hat)))
        ta = worst_case_tra(anchor_set(ua, 0.1), snr, pa)
        tb = worst_case_tra(anchor_set(u_hat, 0.1), snr, pb)
        worst = max(worst, d_psl, abs(ta - tb) / max(ta, tb))
    ok = worst <= 1e-9
    verdict("criterion 9 equivalence classes", ok, f"{pairs} pairs, max discrepancy {worst:.1e}")
    assert ok


def test_criterion_10_determinism(verdict, tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        cmd = [sys.executable, "-m", "antsel.cli", "simulate", "--trials", "20", "--snr-db=0,20", "--seed", "11",
               "--out", str(tmp_path / name)]
        subprocess.run(cmd, check=True, capture_output=True)
        outs.append((tmp_path / name).read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    verdict("criterion 10 determinism", ok, f"{len(outs[0])} bytes, identical {outs[0] == outs[1]}")
    assert ok
