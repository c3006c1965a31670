"""Command line entry point: ``adaptive-mpc <command> ...``.

Exit status is 0 on success, 1 when a run hit an error event or a check
failed, and 2 for bad arguments or invalid input files.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..exceptions import InvalidInputError, ScenarioError
from ..sysid.confidence import ObservationBatch, confidence_score
from ..sysid.estimate import METHODS
from ..sysid.estimator import OnlineSysID
from ..sysid.params import (
    JointDamping,
    JointStiffness,
    LinkComAxis,
    LinkInertiaAxis,
    LinkMass,
    SystemParams,
)
from .config import load_model, load_scenario
from .suite import (
    START_COLUMNS,
    SUMMARY_COLUMNS,
    SWEEP_COLUMNS,
    SWEEP_PARAMS,
    format_table,
    run_single,
    run_suite,
    start_study,
    sweep,
    write_table,
)


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.6g}"
    if isinstance(v, tuple):
        return "[" + ", ".join("-" if x is None else str(x) for x in v) + "]"
    return str(v)


def cmd_run(args):
    scen = load_scenario(args.scenario)
    overrides = {"mode": args.mode} if args.mode else {}
    result, _ = run_single(scen, args.method, args.seed, args.out, args.max_steps, **overrides)
    for key in ("scenario", "method", "seed", "time_to_goal", "success", "mae", "recovery_latency",
                "recovery_cycles", "starvation_events", "stale_events"):
        print(f"{key}: {_fmt(getattr(result, key))}")
    if result.csv_path:
        print(f"log: {result.csv_path}")
    if result.failed:
        print(f"error: {result.error}", file=sys.stderr)
        return 1
    return 0


def cmd_suite(args):
    results, rows = run_suite(args.dir, args.out, args.methods, args.seeds, args.max_steps, args.jobs)
    print(format_table(rows, SUMMARY_COLUMNS))
    failed = [r for r in results if r.failed]
    for r in failed:
        print(f"failed: {r.scenario} {r.method} seed {r.seed}: {r.error}", file=sys.stderr)
    return 1 if failed else 0


def cmd_sweep(args):
    rows = sweep(args.scenario, args.param, args.values, args.seeds, args.method, args.max_steps, args.out)
    print(format_table(rows, SWEEP_COLUMNS))
    return 1 if any(r[3] for r in rows) else 0


def cmd_start_study(args):
    study = start_study(args.scenario, args.seeds, args.scale, args.max_steps)
    print(f"fixed offset: {study.fixed_offset} steps")
    print(format_table(study.rows(), START_COLUMNS))
    print(f"fixed-start failures: {study.fixed_failures}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_table(study.rows(), START_COLUMNS, Path(args.out) / "start_study.csv")
    return 0


def cmd_gradcheck(args):
    from ..dynamics.gradcheck import gradcheck

    model = load_model(args.model)
    rep = gradcheck(model, args.samples, args.tol, args.seed)
    print(f"model: {rep.model}  samples: {rep.n_samples}  rel_tol: {rep.rel_tol:g}")
    for name, err in rep.max_rel_error.items():
        print(f"  {name:5s} max rel error {err:.3e} (sample {rep.worst_sample[name]})")
    print(f"failures: {rep.failures}")
    return 0 if rep.ok else 1


_TARGET_KINDS = ("mass", "inertia", "com", "stiffness", "damping")


def parse_unknown(model, text):
    """``kind:name[:axis]:lo:hi`` into ``(target, lo, hi)``."""
    parts = text.split(":")
    kind = parts[0]
    if kind not in _TARGET_KINDS:
        raise InvalidInputError(f"unknown kind {kind!r} in {text!r}")
    need_axis = kind in ("inertia", "com")
    if len(parts) != (5 if need_axis else 4):
        raise InvalidInputError(f"expected kind:name{':axis' if need_axis else ''}:lo:hi, got {text!r}")
    try:
        lo, hi = float(parts[-2]), float(parts[-1])
    except ValueError:
        raise InvalidInputError(f"bounds in {text!r} are not numbers") from None
    try:
        if kind in ("stiffness", "damping"):
            j = model.joint_index(parts[1])
            return (JointStiffness(j) if kind == "stiffness" else JointDamping(j)), lo, hi
        k = model.link_index(parts[1])
    except KeyError:
        raise InvalidInputError(f"no {('joint' if kind in ('stiffness', 'damping') else 'link')} {parts[1]!r}") from None
    if kind == "mass":
        return LinkMass(k), lo, hi
    if parts[2] not in ("x", "y", "z"):
        raise InvalidInputError(f"axis must be x, y or z in {text!r}")
    axis = "xyz".index(parts[2])
    return (LinkInertiaAxis(k, axis) if kind == "inertia" else LinkComAxis(k, axis)), lo, hi


def read_trajectory(path, model):
    """States from ``x_<i>`` columns and actions from ``u_<i>`` columns.

    Row ``t`` holds the observation at step ``t`` and the action applied after
    it, so the last row's action is unused.
    """
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InvalidInputError(f"{path}: empty file")
        rows = [r for r in reader if r]
    col = {c.strip(): i for i, c in enumerate(header)}
    n, a = 2 * model.n_dof, model.n_act
    missing = [c for c in [f"x_{i}" for i in range(n)] + [f"u_{i}" for i in range(a)] if c not in col]
    if missing:
        raise InvalidInputError(f"{path}: missing columns {', '.join(missing)}")
    try:
        xs = np.array([[float(r[col[f"x_{i}"]]) for i in range(n)] for r in rows])
        us = np.array([[float(r[col[f"u_{i}"]]) for i in range(a)] for r in rows]).reshape(len(rows), a)
    except (ValueError, IndexError) as exc:
        raise InvalidInputError(f"{path}: bad row ({exc})") from None
    if len(rows) < 3:
        raise InvalidInputError(f"{path}: need at least 3 rows")
    return xs, us[:-1]


def cmd_sysid(args):
    path = Path(args.model)
    if path.suffix == ".scenario" or (not path.exists() and not args.unknown):
        scen = load_scenario(args.model)
        model, params = scen.model, scen.params
        velocity_weight = scen.fit_velocity_weight
    else:
        model = load_model(args.model)
        if not args.unknown:
            raise InvalidInputError("a bare model file needs at least one --unknown")
        spec = [parse_unknown(model, u) for u in args.unknown]
        targets = tuple(s[0] for s in spec)
        lo = [s[1] for s in spec]
        hi = [s[2] for s in spec]
        params = SystemParams(targets, [0.5 * (a + b) for a, b in zip(lo, hi)], lo, hi).check_compatible(model)
        velocity_weight = None
    xs, us = read_trajectory(args.trajectory, model)
    est = OnlineSysID(model, params, max_iter=args.max_iter, velocity_weight=velocity_weight,
                      include_coriolis=args.coriolis)
    est.fit(xs, us)
    batch = ObservationBatch(xs, us, model.dt)
    report = {
        "model": model.name,
        "transitions": int(us.shape[0]),
        "estimate": est.params_.as_dict(model),
        "residual": est.residual_,
        "converged": est.converged_,
        "confidence": est.confidence_,
        "confidence_by_group": {
            g: float(confidence_score(model, est.params_, batch, group=g, include_coriolis=args.coriolis).normalized)
            for g in est.params_.groups
        },
        "one_step_r2": est.score(xs, us),
    }
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(f"model: {report['model']}  transitions: {report['transitions']}")
        for k, v in report["estimate"].items():
            print(f"  {k} = {v:.6g}")
        print(f"residual: {report['residual']:.3e}  converged: {report['converged']}")
        print(f"confidence: {report['confidence']:.6g}")
        for g, c in report["confidence_by_group"].items():
            print(f"  {g}: {c:.6g}")
        print(f"one-step R^2: {report['one_step_r2']:.6f}")
    return 0 if est.converged_ else 1


def build_parser():
    p = argparse.ArgumentParser(prog="adaptive-mpc", description="Online system identification with MPC.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", help="scenario file or bundled name")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--method", choices=METHODS)
    r.add_argument("--mode", choices=("virtual", "wallclock"))
    r.add_argument("--max-steps", type=int)
    r.add_argument("--out", help="directory for the run CSV, events and gnuplot data")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run every scenario in a directory")
    s.add_argument("dir", nargs="+", help="directories or scenario files")
    s.add_argument("--out", default="results")
    s.add_argument("--methods", nargs="+", choices=METHODS)
    s.add_argument("--seeds", nargs="+", type=int)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_suite)

    w = sub.add_parser("sweep", help="vary one hyper-parameter")
    w.add_argument("scenario")
    w.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    w.add_argument("--values", required=True, nargs="+", type=float)
    w.add_argument("--seeds", nargs="+", type=int)
    w.add_argument("--method", default="ours", choices=METHODS)
    w.add_argument("--max-steps", type=int)
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)

    a = sub.add_parser("start-study", help="adaptive versus fixed plan start time")
    a.add_argument("scenario")
    a.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    a.add_argument("--scale", nargs="+", type=float, default=[1.0, 2.0, 1.0, 3.0],
                   help="cycled multipliers on the charged solve duration")
    a.add_argument("--max-steps", type=int)
    a.add_argument("--out")
    a.set_defaults(func=cmd_start_study)

    g = sub.add_parser("gradcheck", help="analytic vs finite-difference step derivatives")
    g.add_argument("model", help="model file or bundled name")
    g.add_argument("--samples", type=int, default=1000)
    g.add_argument("--tol", type=float, default=1e-4)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    i = sub.add_parser("sysid", help="offline fit of a recorded trajectory")
    i.add_argument("model", help="scenario file (its unknowns are fitted) or model file")
    i.add_argument("trajectory", help="CSV with x_<i> and u_<i> columns")
    i.add_argument("--unknown", action="append", default=[], metavar="KIND:NAME[:AXIS]:LO:HI")
    i.add_argument("--max-iter", type=int, default=50)
    i.add_argument("--coriolis", action="store_true", help="include the Coriolis term in inertia confidence")
    i.add_argument("--json", action="store_true")
    i.set_defaults(func=cmd_sysid)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "values", None) is not None and args.param in ("H", "T"):
        args.values = [int(v) for v in args.values]
    try:
        return args.func(args)
    except (ScenarioError, InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
