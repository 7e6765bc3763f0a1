"""Command-line interface. Every subcommand writes CSV to stdout or to ``--out``."""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys

import numpy as np

from . import __version__
from .array_core import (STATS_HEADER, ArrayGeometry, greedy_evaluation_count, unique_set_stats,
                         unique_subarray_set)
from .beam_metrics import DEFAULT_N_GRID, beampattern, direction_grid, sidelobe_profile
from .estimator import GridSpec, mle_estimate
from .estimators import METHODS, make_selector
from .neural import AdamConfig, Dataset, ModelFormatError, generate_dataset, init_model, default_layer_dims, save_model, train
from .selector import Method, SelectionBudgetError, multiplication_count
from .signal_model import sample_covariance
from .sim_harness import export_csv, format_csv, load_config, parse_config, run_mse_sweep, run_sequential

TABLE1_ROWS = ((11, 2), (11, 4), (11, 6), (21, 4), (21, 6), (21, 8))
THREADS_ENV = "ANTSEL_THREADS"


class CliError(Exception):
    pass


def _num(v: float) -> str:
    return format(float(v), ".10g")


def _floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.replace(" ", "").split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple[float, float]:
    vals = _floats(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return vals[0], vals[1]


def _ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.replace(" ", "").split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(rows)
    return buf.getvalue()


# --- subcommands --------------------------------------------------------------

def reproduce_table1() -> str:
    lines = [STATS_HEADER]
    lines += [unique_set_stats(n, m).csv_row() for n, m in TABLE1_ROWS]
    return "\n".join(lines) + "\n"


def reproduce_table2(n: int, m: int, n_grid: int, total=None, feasible=None, evaluations=None,
                     n_sidelobes=None, bessel_cost: int = 30, hidden=(16, 32, 64, 32, 16),
                     methods=("psl-c", "tra-g", "tra-dl")) -> str:
    rows = [("method", "multiplications")]
    for name in methods:
        if name == "psl-c":
            f = math.comb(n, m) if total is None else total
            val = multiplication_count(Method.PSL_C, n=n, m=m, total=f, feasible=feasible)
        elif name == "tra-g":
            g = greedy_evaluation_count(n, m) if evaluations is None else evaluations
            val = multiplication_count(Method.TRA_G, n=n, n_grid=n_grid, n_sidelobes=n_sidelobes,
                                       evaluations=g, bessel_cost=bessel_cost)
        else:
            val = multiplication_count(Method.TRA_DL, layer_dims=default_layer_dims(n, tuple(hidden)))
        rows.append((name, val))
    return _csv(rows)


def _cmd_enumerate(a):
    unique, stats = unique_subarray_set(a.n, a.m)
    text = _csv([("N", "M", "F", "F_unique"), (a.n, a.m, stats.total_count, stats.unique_count)])
    if a.unique:
        text += "".join(f"{v}\n" for v in unique)
    _write(text, a.out)


def _cmd_stats(a):
    _write(STATS_HEADER + "\n" + unique_set_stats(a.n, a.m).csv_row() + "\n", a.out)


def _cmd_beampattern(a):
    pos = np.asarray(a.positions, dtype=float)
    grid = direction_grid(a.n_grid)
    rows = [("u", "V")] + [(_num(u), _num(v)) for u, v in zip(grid, beampattern(pos, a.u0, grid))]
    prof = sidelobe_profile(pos, a.u0, a.n_grid)
    rows.append(())
    rows.append(("k", "u_k", "V_k", "corr_k"))
    rows += [(k + 1, _num(s.location), _num(s.value), _num(s.correlation)) for k, s in enumerate(prof.sidelobes)]
    _write(_csv(rows), a.out)


def _read_samples(path) -> np.ndarray:
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            try:
                if len(parts) == 2:
                    vals.append(complex(float(parts[0]), float(parts[1])))
                elif len(parts) == 1:
                    vals.append(complex(parts[0].replace("i", "j")))
                else:
                    raise ValueError
            except ValueError:
                raise CliError(f"{path}:{lineno}: expected 're im' or a complex literal") from None
    if not vals:
        raise CliError(f"{path}: no samples")
    return np.asarray(vals)


def _cmd_estimate(a):
    y = _read_samples(a.y)
    grid = GridSpec(a.coarse_step, a.fine_step)
    _write(_num(mle_estimate(sample_covariance(y), np.asarray(a.positions, dtype=float), grid)) + "\n", a.out)


def _cmd_select(a):
    g = ArrayGeometry(a.n, a.d)
    method = a.method
    if method == "psl-c" and a.delta is not None:
        method = f"psl-c:{a.delta}"
    sel = make_selector(method, g, a.m, a.delta_u, a.n_anchors, a.n_grid, model_path=a.model,
                        max_candidates=a.max_candidates, clamp=a.clamp)
    res = sel.select(a.u_hat, a.snr_db)
    pos = ",".join(format(p, "g") for p in res.positions(g))
    rows = [(str(res.chosen), pos, _num(res.objective), res.evaluations, res.mult_count, int(res.flagged))]
    if a.header:
        rows.insert(0, ("selection", "positions", "objective", "evaluations", "mult_count", "flagged"))
    _write(_csv(rows), a.out)


def _cmd_train(a):
    if a.out in (None, "-"):
        raise CliError("train needs --out for the model file")
    g = ArrayGeometry(a.n, a.d)
    seed = 0 if a.seed is None else a.seed
    rng = np.random.default_rng(seed)
    samples = generate_dataset(a.samples, a.u_range, a.snr_range, g, a.m, rng, n_grid=a.n_grid)
    model = init_model(default_layer_dims(a.n, tuple(a.hidden)), rng)
    cfg = AdamConfig(learning_rate=a.lr, iterations=a.iters, batch_fraction=a.batch_fraction)
    model = train(model, Dataset.from_samples(samples), cfg, rng)
    model.metadata = {
        "seed": seed, "n_antennas": a.n, "spacing": a.d, "m_target": a.m, "samples": a.samples,
        "u_range": list(a.u_range), "snr_db_range": list(a.snr_range), "iterations": a.iters,
        "final_loss": model.loss_history[-1] if model.loss_history else None,
    }
    save_model(model, a.out)
    if model.loss_history:
        print(f"loss,{_num(model.loss_history[0])},{_num(model.loss_history[-1])}")


def _sim_config(a):
    over = dict(master_seed=a.seed, trials=a.trials,
                methods=tuple(a.methods.split(",")) if a.methods else None,
                snr_db_points=tuple(a.snr_db) if a.snr_db else None, model_path=a.model)
    if getattr(a, "measurements", None) is not None:
        over["n_measurements"] = a.measurements
    if a.config:
        return load_config(a.config, **over)
    return parse_config("", **over)


def _cmd_simulate(a):
    cfg = _sim_config(a)
    pts = run_mse_sweep(cfg, workers=a.threads)
    _export(pts, a.out)


def _cmd_sequential(a):
    cfg = _sim_config(a)
    pts = run_sequential(cfg, workers=a.threads)
    _export(pts, a.out)


def _export(pts, out):
    if out in (None, "-"):
        sys.stdout.write(format_csv(pts))
    else:
        export_csv(pts, out)


def _cmd_table1(a):
    _write(reproduce_table1(), a.out)


def _cmd_table2(a):
    methods = ("psl-c", "tra-g", "tra-dl") if a.method == "all" else (a.method,)
    missing = [flag for name, flag, val in (("psl-c", "--feasible", a.feasible), ("tra-g", "--n-sidelobes", a.n_sidelobes))
               if name in methods and val is None]
    if missing:
        raise ValueError(f"table2 needs {' and '.join(missing)} for the selected methods")
    _write(reproduce_table2(a.n, a.m, a.n_grid, a.total, a.feasible, a.evaluations, a.n_sidelobes,
                            a.bessel_cost, a.hidden, methods), a.out)


# --- parser -------------------------------------------------------------------

def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master random seed")
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"worker processes (default from ${THREADS_ENV}, else 1)")
    common.add_argument("--out", default=None, help="output file (default: stdout)")

    p = argparse.ArgumentParser(prog="antsel", description="Antenna subarray selection for DOA estimation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        sp.set_defaults(func=func)
        return sp

    def nm(sp):
        sp.add_argument("--n", type=int, default=21, help="number of antennas N")
        sp.add_argument("--m", type=int, required=True, help="number of selected antennas M")

    sp = add("enumerate", _cmd_enumerate, "count subarrays, optionally listing the unique aligned set")
    nm(sp)
    sp.add_argument("--unique", action="store_true", help="list the unique aligned selections")

    sp = add("stats", _cmd_stats, "unique-set statistics as one CSV row")
    nm(sp)

    sp = add("beampattern", _cmd_beampattern, "beampattern samples and sidelobe peaks")
    sp.add_argument("--positions", type=_floats, required=True, help="comma-separated positions (half wavelengths)")
    sp.add_argument("--u0", type=float, required=True, help="source direction u0 = sin(theta)")
    sp.add_argument("--n-grid", type=int, default=DEFAULT_N_GRID, help="direction grid size")

    sp = add("estimate", _cmd_estimate, "ML direction estimate from a file of complex samples")
    sp.add_argument("--y", required=True, help="file with one sample per line: 're im' or a complex literal")
    sp.add_argument("--positions", type=_floats, required=True, help="comma-separated positions (half wavelengths)")
    sp.add_argument("--coarse-step", type=float, default=0.2, help="coarse angle step in degrees")
    sp.add_argument("--fine-step", type=float, default=0.01, help="fine angle step in degrees")

    sp = add("select", _cmd_select, "select a subarray and print selection,positions,objective,evaluations,mult_count,flagged")
    sp.add_argument("--method", choices=METHODS, required=True, help="selection method")
    nm(sp)
    sp.add_argument("--d", type=float, default=0.5, help="antenna spacing in half wavelengths")
    sp.add_argument("--u-hat", type=float, default=0.0, help="direction prior")
    sp.add_argument("--delta-u", type=float, default=0.1, help="prior half-width for anchors")
    sp.add_argument("--n-anchors", type=int, default=5, help="number of anchors (odd)")
    sp.add_argument("--snr-db", type=float, default=10.0, help="aggregate SNR in dB")
    sp.add_argument("--delta", type=float, default=None, help="PSL bound for psl-c (default 1)")
    sp.add_argument("--model", default=None, help="model file for tra-dl")
    sp.add_argument("--n-grid", type=int, default=DEFAULT_N_GRID, help="direction grid size")
    sp.add_argument("--max-candidates", type=int, default=50_000, help="cap for exhaustive search")
    sp.add_argument("--clamp", action="store_true", help="clamp the non-outlier weight at zero")
    sp.add_argument("--header", action="store_true", help="print a header row")

    sp = add("train", _cmd_train, "train the selection network on greedy labels")
    nm(sp)
    sp.add_argument("--d", type=float, default=0.5, help="antenna spacing in half wavelengths")
    sp.add_argument("--samples", type=int, default=10_000, help="training samples")
    sp.add_argument("--iters", type=int, default=200, help="Adam iterations")
    sp.add_argument("--lr", type=float, default=0.001, help="learning rate")
    sp.add_argument("--batch-fraction", type=float, default=0.1, help="batch size as a fraction of the data")
    sp.add_argument("--hidden", type=_ints, default=[16, 32, 64, 32, 16], help="hidden layer sizes")
    sp.add_argument("--u-range", type=_pair, default=(-0.9, 0.9), help="direction range lo,hi")
    sp.add_argument("--snr-range", type=_pair, default=(-10.0, 20.0), help="SNR range in dB lo,hi")
    sp.add_argument("--n-grid", type=int, default=DEFAULT_N_GRID, help="direction grid size")

    for name, func, text in (("simulate", _cmd_simulate, "MSE versus SNR sweep"),
                             ("sequential", _cmd_sequential, "sequential selection experiment")):
        sp = add(name, func, text)
        sp.add_argument("--config", default=None, help="key = value config file; flags override it")
        sp.add_argument("--trials", type=int, default=None, help="trials per SNR point")
        sp.add_argument("--methods", default=None, help="comma-separated methods, e.g. tra-g,psl-c:0.85,ula")
        sp.add_argument("--snr-db", type=_floats, default=None, help="comma-separated SNR points in dB")
        sp.add_argument("--model", default=None, help="model file for tra-dl")
        if name == "sequential":
            sp.add_argument("--measurements", type=int, default=None, help="number of measurements")

    sp = add("table1", _cmd_table1, "unique-set statistics for the six reference (N, M) pairs")

    sp = add("table2", _cmd_table2, "multiplication counts per method")
    sp.add_argument("--n", type=int, default=21, help="number of antennas N")
    sp.add_argument("--m", type=int, default=6, help="number of selected antennas M")
    sp.add_argument("--method", choices=("all", "psl-c", "tra-g", "tra-dl"), default="all")
    sp.add_argument("--n-grid", type=int, default=DEFAULT_N_GRID, help="direction grid size N_R")
    sp.add_argument("--total", type=int, default=None, help="candidate count F (default C(N, M))")
    sp.add_argument("--feasible", type=int, default=None, help="feasible candidate count for psl-c")
    sp.add_argument("--evaluations", type=int, default=None, help="greedy evaluations G (default from N, M)")
    sp.add_argument("--n-sidelobes", type=int, default=None, help="sidelobe count K for tra-g")
    sp.add_argument("--bessel-cost", type=int, default=30, help="multiplications per Bessel evaluation")
    sp.add_argument("--hidden", type=_ints, default=[16, 32, 64, 32, 16], help="hidden layer sizes for tra-dl")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, ValueError, OSError, SelectionBudgetError, ModelFormatError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
