"""Command-line entry point: ``focktraj <command> ...``.

Exit codes: 0 success, 2 invalid input, 3 numerical/step-size problem,
4 infeasible record.  Any failed validation suite also exits with 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import FockTrajError, ValidationError
from .integrator import Detection, Scenario, TimeGrid, run_ensemble, run_trajectory, \
    solve_master_equation
from .records import TrajectoryRecord, fmt
from .scenario import PRESETS, load_scenario_dict, preset, scenario_from_dict
from . import validation

EXIT_CHECK_FAILED = 1


def write_series_csv(path, times, series: Dict[str, np.ndarray]) -> None:
    names = list(series)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + names)
        for i, t in enumerate(times):
            w.writerow([fmt(t)] + [fmt(series[n][i]) for n in names])


def write_summary_csv(path, summary) -> None:
    names = list(summary.mean)
    cols = []
    for n in names:
        cols += [f"{n}_mean", f"{n}_variance", f"{n}_stderr"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + cols)
        se = {n: summary.stderr(n) for n in names}
        for i, t in enumerate(summary.times):
            row = [fmt(t)]
            for n in names:
                row += [fmt(summary.mean[n][i]), fmt(summary.variance[n][i]), fmt(se[n][i])]
            w.writerow(row)


def _apply_overrides(spec: dict, args) -> dict:
    det = dict(spec.get("detection", {}))
    for key, attr in (("scheme", "scheme"), ("efficiency", "eta"), ("phase", "phase"),
                      ("outcomes", "outcomes"), ("method", "method")):
        val = getattr(args, attr, None)
        if val is not None:
            det[key] = val
    spec["detection"] = det
    if getattr(args, "dt", None) is not None:
        spec.setdefault("grid", {})["dt"] = args.dt
    if getattr(args, "observables", None):
        spec["observables"] = [s for s in args.observables.split(",") if s]
    if getattr(args, "seed", None) is not None:
        spec["seed"] = args.seed
    return spec


def _scenario(args) -> Scenario:
    return scenario_from_dict(_apply_overrides(load_scenario_dict(args.scenario), args))


def _out_paths(out: str):
    base = Path(out)
    if base.suffix == ".csv":
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    return base.with_suffix(".csv"), base.with_suffix(".record")


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    seed = sc.seed if sc.seed is not None else 0
    res = run_trajectory(sc, seed=seed, save_every=args.save_every, keep_snapshots=False)
    csv_path, rec_path = _out_paths(args.out)
    write_series_csv(csv_path, res.times, res.series)
    msg = f"wrote {csv_path}"
    if res.record is not None:
        res.record.dump(rec_path)
        msg += f" and {rec_path}"
        if res.record.scheme == "counting":
            msg += f" ({res.record.counts} counts)"
    print(msg)
    return 0


def cmd_ensemble(args) -> int:
    sc = _scenario(args)
    summary = run_ensemble(sc, args.n_traj, base_seed=args.base_seed, workers=args.workers,
                           save_every=args.save_every)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_summary_csv(path, summary)
    line = f"wrote {path} ({args.n_traj} trajectories)"
    if sc.detection.scheme == "counting":
        c = summary.final_counts
        se = c.std(ddof=1) / np.sqrt(len(c)) if len(c) > 1 else 0.0
        line += f"; mean counts {c.mean():.4f} +- {se:.4f}"
    print(line)
    return 0


def cmd_replay(args) -> int:
    sc = _scenario(args)
    rec = TrajectoryRecord.load(args.record)
    # the record defines the measurement; only the field/system side comes from the scenario
    det = Detection(rec.scheme, rec.phase, rec.efficiency,
                    rec.outcome_kind if rec.scheme != "counting" else "gaussian",
                    sc.detection.method)
    n = len(rec)
    sc = sc.with_(detection=det, grid=TimeGrid(rec.t_start, rec.t_start + n * rec.dt, rec.dt))
    res = run_trajectory(sc, record=rec, save_every=args.save_every, keep_snapshots=False)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_series_csv(path, res.times, res.series)
    print(f"wrote {path}")
    return 0


def cmd_me(args) -> int:
    sc = _scenario(args)
    res = solve_master_equation(sc, save_every=args.save_every)
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    write_series_csv(path, res.times, res.series)
    print(f"wrote {path}")
    return 0


def cmd_validate(args) -> int:
    sc = _scenario(args)
    seed = sc.seed if sc.seed is not None else 0
    if args.check == "oracle":
        rep = validation.check_oracle(sc, bins=args.bins, seed=seed, records=args.records,
                                      show_bins=args.verbose)
    elif args.check == "duality":
        rep = validation.check_duality(sc, steps=args.steps, seed=seed)
    elif args.check == "invariants":
        rep = validation.check_invariants(sc, seed=seed)
    else:
        rep = validation.check_statistics(sc, n_traj=args.n_traj, base_seed=args.base_seed,
                                          workers=args.workers)
    print(rep.text)
    return 0 if rep.passed else EXIT_CHECK_FAILED


def cmd_presets(args) -> int:
    if args.name:
        print(json.dumps(preset(args.name), indent=2))
    else:
        for name in sorted(PRESETS):
            print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="focktraj",
                                description="Quantum trajectories driven by Fock-state wave packets.")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, overrides=True):
        sp.add_argument("scenario", help="JSON scenario file or preset:NAME")
        if overrides:
            sp.add_argument("--scheme", choices=["counting", "homodyne", "heterodyne", "none"])
            sp.add_argument("--eta", type=float, help="detection efficiency")
            sp.add_argument("--phase", type=float, help="local-oscillator phase")
            sp.add_argument("--outcomes", choices=["gaussian", "binary"])
            sp.add_argument("--method", choices=["kraus", "euler"])
        sp.add_argument("--dt", type=float)
        sp.add_argument("--observables", help="comma-separated observable names")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--save-every", type=int, default=1)

    sp = sub.add_parser("simulate", help="one conditioned trajectory")
    scenario_args(sp)
    sp.add_argument("--out", default="trajectory", help="output prefix (.csv and .record)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ensemble", help="ensemble mean/variance over many trajectories")
    scenario_args(sp)
    sp.add_argument("--n-traj", type=int, default=100)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--base-seed", type=int, default=0)
    sp.add_argument("--out", default="ensemble.csv")
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("replay", help="re-condition a scenario on a saved record")
    sp.add_argument("record")
    scenario_args(sp, overrides=False)
    sp.add_argument("--out", default="replay.csv")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("me", help="unconditional master-equation solution")
    scenario_args(sp, overrides=False)
    sp.add_argument("--out", default="me.csv")
    sp.set_defaults(func=cmd_me)

    sp = sub.add_parser("validate", help="run a self-check suite")
    scenario_args(sp)
    sp.add_argument("--check", choices=["oracle", "duality", "invariants", "statistics"],
                    default="invariants")
    sp.add_argument("--bins", type=int, default=8)
    sp.add_argument("--records", type=int, default=5)
    sp.add_argument("--steps", type=int, default=100)
    sp.add_argument("--n-traj", type=int, default=1000)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--base-seed", type=int, default=0)
    sp.add_argument("--verbose", action="store_true", help="per-bin oracle table")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("presets", help="list presets, or print one as JSON")
    sp.add_argument("name", nargs="?")
    sp.set_defaults(func=cmd_presets)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "save_every", 1) is not None and getattr(args, "save_every", 1) < 1:
        print("error: --save-every must be >= 1", file=sys.stderr)
        return ValidationError.exit_code
    try:
        return args.func(args)
    except FockTrajError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ValidationError.exit_code


if __name__ == "__main__":
    sys.exit(main())
