"""Pilot runs that fix the Monte-Carlo fixtures used by the acceptance suite.

Run from the repository root:

    python scripts/pilot.py [--only sync,pullback,...]

Writes tests/fixtures/acceptance.json.  The acceptance suite reads the seeds
and parameters from that file and re-runs every experiment itself; the
observed values stored here are for inspection only.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np

from qglab.dynamics import FlowConfig
from qglab.lab import (
    AbsorptionExperiment,
    PullbackExperiment,
    SemicontinuitySweep,
    SyncExperiment,
    random_field,
    run_absorption,
    run_pullback,
    run_semicontinuity,
    run_sync,
    translate,
)
from qglab.spectral import TorusGrid

FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "acceptance.json"
DT = 2.0**-7
GRID = TorusGrid(64)


def sync_pilot() -> dict:
    seeds = list(range(20))
    out = {"noise": "additive", "integrator": "etd2", "horizon": 4.0, "init_norm": 1.0, "seeds": seeds,
           "sweep": {}}
    for kappa in (0.05, 0.25, 1.0, 4.0):
        cfg = FlowConfig(grid=GRID, kappa=kappa, dt=DT, integrator="etd2", noise_mode="additive")
        rows = []
        for s in seeds:
            a = random_field(GRID, s, 0)
            b = random_field(GRID, s, 1)
            r = run_sync(SyncExperiment(cfg, s, a, b, 4.0, 0.0, 16))
            rows.append({"seed": s, "passed": r.passed, "rate": r.summary["fitted_rate"],
                         "ratio": r.summary["terminal_ratio"]})
        out["sweep"][str(kappa)] = {"passed": sum(x["passed"] for x in rows), "runs": rows}
        print(f"sync kappa={kappa}: {out['sweep'][str(kappa)]['passed']}/20")
    out["kappa_large"] = 4.0
    out["kappa_small"] = 0.05
    return out


def pullback_pilot() -> dict:
    seeds = [11, 12, 13]
    sched = [-7.5, -10.0, -12.5, -15.0]
    cfg = FlowConfig(grid=GRID, kappa=2.0, dt=DT, noise_mode="additive")
    res = {}
    for s in seeds:
        th = random_field(GRID, s, 0)
        r = run_pullback(PullbackExperiment(cfg, s, [th, translate(th, (1.0, 2.0))], sched))
        res[str(s)] = r.series["pullback"]
        print(f"pullback seed={s}: {r.verdict} from {r.summary['cauchy_from_t0']}")
    return {"kappa": 2.0, "noise": "additive", "integrator": "imex-cnab", "seeds": seeds, "t0_schedule": sched,
            "runs": res}


def semicontinuity_pilot() -> dict:
    seeds = list(range(100, 110))
    eps = [0.2, 0.1, 0.05, 0.025]
    cfg = FlowConfig(grid=GRID, kappa=1.0, dt=DT, noise_mode="additive")
    res = {}
    for s in seeds:
        th0 = [random_field(GRID, s, 0), random_field(GRID, s, 1)]
        r = run_semicontinuity(SemicontinuitySweep(cfg, s, eps, th0, 5.0))
        res[str(s)] = {"D": r.summary["D"], "halving": r.summary["halving_ratios"],
                       "ratio": r.summary["ratio_min_over_max"]}
        print(f"semicontinuity seed={s}: ratio={r.summary['ratio_min_over_max']:.4f}")
    return {"kappa": 1.0, "noise": "additive", "depth": 5.0, "eps_schedule": eps, "seeds": seeds, "runs": res}


def absorption_pilot() -> dict:
    seed = 21
    res = {}
    for rho in (1.0, 10.0):
        cfg = FlowConfig(grid=GRID, kappa=1.0, dt=DT, noise_mode="additive")
        r = run_absorption(AbsorptionExperiment(cfg, seed, rho, [-15.0, -20.0, -25.0]))
        res[str(rho)] = {k: r.summary[k] for k in ("r1_sq", "c1", "c2", "relative_variation")}
        print(f"absorption rho={rho}: {r.verdict} r1^2={r.summary['r1_sq']:.6g}")
    return {"kappa": 1.0, "noise": "additive", "seed": seed, "t0_schedule": [-15.0, -20.0, -25.0],
            "rho": [1.0, 10.0], "runs": res}


PILOTS = {
    "sync": sync_pilot,
    "pullback": pullback_pilot,
    "semicontinuity": semicontinuity_pilot,
    "absorption": absorption_pilot,
}


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", default=",".join(PILOTS))
    args = ap.parse_args()
    data = json.loads(FIXTURE.read_text()) if FIXTURE.exists() else {}
    data.update({"n": GRID.n, "dt": DT, "decay_seeds": list(range(20))})
    for name in args.only.split(","):
        t = time.perf_counter()
        data[name] = PILOTS[name]()
        print(f"  [{name}: {time.perf_counter() - t:.1f} s]")
    FIXTURE.write_text(json.dumps(data, indent=1, default=lambda x: float(x) if isinstance(x, np.floating) else x)
                       + "\n")


if __name__ == "__main__":
    main()
