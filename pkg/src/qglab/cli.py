"""
Command-line front end.

    qglab <subcommand> CONFIG [--seed N] [--out DIR] [--override-subcritical]

Exit codes: 0 every verdict passed, 2 some verdict failed, 3 numerical
blow-up, 4 configuration error.  ``QGLAB_WORKERS`` sets the number of worker
processes used to fan out independent seeds; it never changes results.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import EXPERIMENTS, ConfigError, RunConfig, load_config
from .dynamics import BlowUpError, FlowState, advance
from .lab import (
    AbsorptionExperiment,
    ExperimentReport,
    PullbackExperiment,
    SemicontinuitySweep,
    SyncExperiment,
    check_positivity,
    random_field,
    run_absorption,
    run_lp_decay,
    run_pullback,
    run_semicontinuity,
    run_sync,
)
from .noise import check_hypothesis_e1
from .ou import ergodic_diagnostic
from .spectral import lp_norm_values, snapshot_bytes, sobolev_norm_coeffs

EXIT_PASS = 0
EXIT_VERDICT = 2
EXIT_BLOWUP = 3
EXIT_CONFIG = 4


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


class RunWriter:
    """Single writer for one run directory; every file passes through here and is inventoried."""

    def __init__(self, root: Path) -> None:
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: dict[str, dict] = {}

    def _put(self, name: str, data: bytes) -> None:
        target = self.root / name
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=".tmp-")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
        self.files[name] = {"bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()}

    def json(self, name: str, obj) -> None:
        self._put(name, (json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n").encode())

    def csv(self, name: str, rows: Sequence[dict]) -> None:
        buf = io.StringIO()
        if rows:
            cols = list(rows[0])
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _csv_value(r.get(k)) for k in cols})
        self._put(name, buf.getvalue().encode())

    def snapshot(self, name: str, field) -> None:
        self._put(name, snapshot_bytes(field))

    def manifest(self, cfg: RunConfig, command: str, reports: list[ExperimentReport], status: str,
                 timing: dict) -> None:
        body = {
            "artifact": "qglab",
            "version": __version__,
            "command": command,
            "config": cfg.echo(),
            "config_hash": cfg.content_hash(),
            "status": status,
            "verdicts": [{"experiment": r.experiment, "seeds": r.seeds, "verdict": r.verdict, "passed": r.passed}
                         for r in reports],
            "files": dict(sorted(self.files.items())),
            "timing": timing,
        }
        data = (json.dumps(_clean(body), indent=2, sort_keys=True) + "\n").encode()
        fd, tmp = tempfile.mkstemp(dir=self.root, prefix=".tmp-")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, self.root / "manifest.json")


def _csv_value(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# --------------------------------------------------------------------------
# Drivers; each returns reports plus (name, field) snapshot pairs


def _seeds(cfg: RunConfig, n: int) -> list[int]:
    return [cfg.seed + i for i in range(n)]


def _fan_out(fn: Callable, cfg: RunConfig, seeds: list[int]) -> list[ExperimentReport]:
    workers = int(os.environ.get("QGLAB_WORKERS", "1") or 1)
    if workers <= 1 or len(seeds) == 1:
        return [fn(cfg, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves submission order, so merging never depends on completion order
        return list(pool.map(fn, [cfg] * len(seeds), seeds))


def _aggregate(name: str, reports: list[ExperimentReport], min_fraction: float) -> ExperimentReport:
    n_pass = sum(r.passed for r in reports)
    need = math.ceil(min_fraction * len(reports) - 1e-12)
    ok = n_pass >= need
    return ExperimentReport(
        name,
        f"{n_pass}/{len(reports)} seeds passed (need {need})",
        ok,
        [s for r in reports for s in r.seeds],
        {"passed": n_pass, "total": len(reports), "required": need},
    )


def _simulate(cfg: RunConfig) -> tuple[list[ExperimentReport], list]:
    p = cfg.params()
    fc = cfg.flow_config()
    path = fc.path(cfg.seed)
    theta0 = random_field(fc.grid, cfg.seed, 0, s=p.init_s, norm=p.init_norm)
    rows, snaps = [], []
    g = fc.grid

    def observe(t, th):
        rows.append({
            "t": t,
            "Hs:0": sobolev_norm_coeffs(g, th.coeffs, 0.0),
            "Hs:1": sobolev_norm_coeffs(g, th.coeffs, 1.0),
            "Lp:inf": lp_norm_values(th.physical(), math.inf, g.cell_area),
        })
        if cfg.output.snapshots:
            snaps.append((f"snapshots/theta_{len(snaps):05d}.qgf1", th))

    observe(p.t_start, theta0)
    state = advance(FlowState(p.t_start, theta0), fc, path, p.t_end, observe=observe, stride=cfg.output.stride)
    rep = ExperimentReport(
        "simulate", "completed", True, [cfg.seed],
        {"t_end": state.time, "Hs:1_final": sobolev_norm_coeffs(g, state.theta.coeffs, 1.0)},
        {"trajectory": rows},
    )
    return [rep], snaps


def _pullback(cfg: RunConfig):
    p = cfg.params()
    fc = cfg.flow_config()
    th0 = [random_field(fc.grid, cfg.seed, i, norm=p.init_norm) for i in range(p.n_theta0)]
    rep = run_pullback(PullbackExperiment(fc, cfg.seed, th0, p.t0_schedule, p.eval_time, p.norm_order, p.tol))
    return [rep], []


def _sync_one(cfg: RunConfig, seed: int) -> ExperimentReport:
    p = cfg.params()
    fc = cfg.flow_config()
    a = random_field(fc.grid, seed, 0, norm=p.init_norm)
    b = random_field(fc.grid, seed, 1, norm=p.init_norm)
    return run_sync(SyncExperiment(fc, seed, a, b, p.horizon, p.t0, cfg.output.stride))


def _sync(cfg: RunConfig):
    p = cfg.params()
    reps = _fan_out(_sync_one, cfg, _seeds(cfg, p.n_seeds))
    if len(reps) == 1:
        return reps, []
    return [_aggregate("sync", reps, p.min_pass_fraction)] + reps, []


def _absorb(cfg: RunConfig):
    p = cfg.params()
    exp = AbsorptionExperiment(
        cfg.flow_config(), cfg.seed, p.rho, p.t0_schedule, p.s, p.n_trig, p.n_random, cfg.output.stride, p.delta
    )
    return [run_absorption(exp)], []


def _decay_one(cfg: RunConfig, seed: int) -> ExperimentReport:
    p = cfg.params()
    fc = cfg.flow_config()
    th = random_field(fc.grid, seed, 0, norm=p.init_norm)
    return run_lp_decay(fc, p.p, th, p.horizon, seed=seed, t0=p.t0, stride=cfg.output.stride)


def _decay(cfg: RunConfig):
    p = cfg.params()
    reps = _fan_out(_decay_one, cfg, _seeds(cfg, p.n_seeds))
    if len(reps) == 1:
        return reps, []
    return [_aggregate("decay", reps, 1.0)] + reps, []


def _semicontinuity(cfg: RunConfig):
    p = cfg.params()
    fc = cfg.flow_config()
    th0 = [random_field(fc.grid, cfg.seed, i, norm=p.init_norm) for i in range(p.n_theta0)]
    exp = SemicontinuitySweep(fc, cfg.seed, p.eps_schedule, th0, p.depth, p.s, p.slack, p.ratio_max)
    return [run_semicontinuity(exp)], []


def _check_e1(cfg: RunConfig):
    p = cfg.params()
    eq = cfg.equation
    r = check_hypothesis_e1(cfg.spectrum(), eq.s, eq.alpha, eq.sigma0, eq.eps0, p.K)
    rep = ExperimentReport(
        "check-e1", r.verdict, r.verdict == "admissible", [cfg.seed],
        {"m_star": r.m_star, "truncated_trace": r.truncated_trace, "analytic_condition": r.analytic_condition,
         **r.inputs},
        notes=[r.to_text()],
    )
    return [rep], []


def _ou_diag(cfg: RunConfig):
    p = cfg.params()
    fc = cfg.flow_config()
    eq = cfg.equation
    r = ergodic_diagnostic(
        fc.ou_params, fc.path(cfg.seed), p.m, p.k_pow, p.horizon, fc.grid,
        sample_dt=p.sample_dt, n_ensemble=p.n_ensemble, s=eq.s, sigma0=eq.sigma0, eps0=eq.eps0,
        record_every=cfg.output.stride,
    )
    ok = r.relative_gap < p.tol
    rep = ExperimentReport(
        "ou-diag", "ergodic average matches" if ok else "ergodic average mismatch", ok, [cfg.seed],
        {"time_average": r.time_average, "ensemble": r.ensemble, "analytic": r.analytic,
         "relative_gap": r.relative_gap, "growth_proxy": r.growth_proxy, "sample_dt": r.sample_dt, "tol": p.tol},
        {"ergodic": r.rows()},
    )
    return [rep], []


def _positivity(cfg: RunConfig):
    p = cfg.params()
    fc = cfg.flow_config()
    g = fc.grid
    rows = []
    worst = math.inf
    fields = [random_field(g, cfg.seed, i, norm=p.init_norm) for i in range(p.n_fields)]
    for pv in p.p_values:
        for i, th in enumerate(fields):
            val = check_positivity(th, fc.kappa, fc.alpha, pv, fc.lambda1)
            scale = sobolev_norm_coeffs(g, th.coeffs, 1.0) ** pv
            norm_val = val / scale if scale > 0 else 0.0
            worst = min(worst, norm_val)
            rows.append({"p": pv, "alpha": fc.alpha, "field": i, "value": val, "normalized": norm_val})
    ok = worst >= -p.tol
    rep = ExperimentReport(
        "positivity", "nonnegative" if ok else "negative value found", ok, [cfg.seed],
        {"worst_normalized": worst, "tol": p.tol, "cells": len(p.p_values), "fields_per_cell": p.n_fields},
        {"positivity": rows},
    )
    return [rep], []


DRIVERS: dict[str, Callable[[RunConfig], tuple[list[ExperimentReport], list]]] = {
    "simulate": _simulate,
    "pullback": _pullback,
    "sync": _sync,
    "absorb": _absorb,
    "decay": _decay,
    "semicontinuity": _semicontinuity,
    "check-e1": _check_e1,
    "ou-diag": _ou_diag,
    "positivity": _positivity,
}


# --------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qglab", description="Stochastic QG attractor lab")
    ap.add_argument("--version", action="version", version=f"qglab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("config", help="TOML run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override the configured seed")
        sp.add_argument("--out", default=None, help="output directory (overrides [output] directory)")
        sp.add_argument("--override-subcritical", action="store_true",
                        help="allow alpha <= 1/2 (results carry no guarantees)")
    return ap


def run_command(command: str, cfg: RunConfig, out: Path) -> int:
    start = time.time()
    writer = RunWriter(out)
    reports: list[ExperimentReport] = []
    try:
        reports, snaps = DRIVERS[command](cfg)
    except BlowUpError as e:
        status, code = f"blow-up at t={e.time:.6g}", EXIT_BLOWUP
        writer.json("report.json", {"command": command, "config_hash": cfg.content_hash(), "seed": cfg.seed,
                                    "status": status, "error": str(e)})
        print(f"qglab: {e}", file=sys.stderr)
    except ValueError as e:
        # driver preconditions that the parser cannot see (alignment of schedules and strides)
        status, code = "configuration error", EXIT_CONFIG
        print(f"qglab: configuration error: {e}", file=sys.stderr)
    else:
        for rep in reports:
            for name, rows in sorted(rep.series.items()):
                tag = f"_seed{rep.seeds[0]}" if len(reports) > 1 and len(rep.seeds) == 1 else ""
                writer.csv(f"{name}{tag}.csv", rows)
        for name, field in snaps:
            writer.snapshot(name, field)
        # a Monte-Carlo aggregate (first report) decides; per-seed reports are informational
        aggregate = len(reports) > 1 and "required" in reports[0].summary
        passed = reports[0].passed if aggregate else all(r.passed for r in reports)
        status, code = ("pass", EXIT_PASS) if passed else ("verdict failure", EXIT_VERDICT)
        writer.json("report.json", {
            "command": command,
            "config_hash": cfg.content_hash(),
            "seed": cfg.seed,
            "status": status,
            "reports": [r.to_dict() for r in reports],
        })
        for r in reports:
            print(f"{r.experiment} seeds={r.seeds}: {r.verdict}")
    writer.manifest(cfg, command, reports, status, {"start": start, "end": time.time()})
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            seed=args.seed,
            experiment=args.command,
            override_subcritical=args.override_subcritical,
            output_dir=args.out,
        )
    except ConfigError as e:
        print(f"qglab: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return run_command(args.command, cfg, Path(cfg.output.directory))


if __name__ == "__main__":
    sys.exit(main())
