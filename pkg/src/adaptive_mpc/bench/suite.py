"""Batch runs: scenario suites, hyper-parameter sweeps and the start-time study.

Each run writes ``<scenario>_<method>_s<seed>.csv`` (the :class:`RunLog`
columns), a matching ``.events.csv``, a whitespace ``.dat`` file for gnuplot
with columns ``step time rel_error goal_distance confidence`` and one
``.<parameter>.dat`` file per unknown with columns ``step time true estimate``.
"""

from __future__ import annotations

import csv
import math
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..exceptions import InvalidInputError
from ..sysid.estimate import METHODS
from .config import load_scenario
from .methods import run_method
from .metrics import relative_error

RUN_COLUMNS = (
    "scenario",
    "method",
    "seed",
    "time_to_goal",
    "success",
    "mae",
    "recovery_latency",
    "recovery_cycles",
    "starvation_events",
    "stale_events",
    "error",
)

SUMMARY_COLUMNS = (
    "scenario",
    "method",
    "runs",
    "failed",
    "successes",
    "mean_time_to_goal",
    "std_time_to_goal",
    "mean_mae",
    "std_mae",
    "median_recovery_steps",
    "median_recovery_cycles",
    "starvation_events",
    "stale_events",
)

SWEEP_PARAMS = ("H", "T", "eps1", "eps2")


@dataclass(frozen=True)
class RunResult:
    """Picklable outcome of one run."""

    scenario: str
    method: str
    seed: int
    time_to_goal: float
    success: bool
    mae: float
    recovery_latency: tuple
    recovery_cycles: tuple
    starvation_events: int
    stale_events: int
    error: str
    csv_path: str | None = None

    @property
    def failed(self):
        return bool(self.error)


def run_stem(scenario, method, seed):
    return f"{scenario}_{method}_s{seed}"


def _safe(label):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label).strip("_")


def write_dat(log, path):
    """Run-level plot data at ``path`` plus one file per parameter beside it."""
    path = Path(path)
    err = relative_error(log)
    with path.open("w") as fh:
        fh.write("# step time rel_error goal_distance confidence\n")
        for i, s in enumerate(log.steps):
            fh.write(f"{s} {s * log.dt!r} {err[i]!r} {log.goal_distance[i]!r} {log.confidence[i]!r}\n")
    arr = log.as_arrays()
    out = [path]
    for j, label in enumerate(log.labels):
        p = path.with_name(f"{path.stem}.{_safe(label)}.dat")
        with p.open("w") as fh:
            fh.write(f"# {label}: step time true estimate\n")
            for i, s in enumerate(log.steps):
                fh.write(f"{s} {s * log.dt!r} {arr['true'][i, j]!r} {arr['est'][i, j]!r}\n")
        out.append(p)
    return out


def run_single(scenario, method=None, seed=0, out_dir=None, max_steps=None, **overrides):
    """Run once and optionally write the per-run files."""
    if isinstance(scenario, (str, Path)):
        scenario = load_scenario(scenario)
    log, m = run_method(scenario, seed, method, max_steps=max_steps, **overrides)
    method = log.meta["method"]
    errors = log.events_of("error")
    path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = run_stem(scenario.name, method, seed)
        path = str(log.to_csv(out / f"{stem}.csv"))
        log.events_to_csv(out / f"{stem}.events.csv")
        write_dat(log, out / f"{stem}.dat")
    result = RunResult(
        scenario=scenario.name,
        method=method,
        seed=int(seed),
        time_to_goal=m.time_to_goal,
        success=m.success,
        mae=m.mae,
        recovery_latency=m.recovery_latency,
        recovery_cycles=m.recovery_cycles,
        starvation_events=m.starvation_events,
        stale_events=m.stale_events,
        error="; ".join(e.detail for e in errors),
        csv_path=path,
    )
    return result, log


def _job(args):
    path, method, seed, out_dir, max_steps, overrides = args
    try:
        return run_single(path, method, seed, out_dir, max_steps, **overrides)[0]
    except Exception as exc:  # recorded so the rest of the suite still runs
        name = Path(path).name.split(".")[0]
        return RunResult(name, method, int(seed), math.inf, False, math.nan, (), (), 0, 0,
                         f"{type(exc).__name__}: {exc}")


def _map(jobs, n_jobs):
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_job(j) for j in jobs]
    # jax is not fork-safe once initialised
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=n_jobs, mp_context=ctx) as pool:
        return list(pool.map(_job, jobs))


def _median(values):
    vals = [v for v in values if v is not None]
    return float(np.median(vals)) if vals else math.nan


def _std(values):
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def run_rows(results):
    """One row per run in :data:`RUN_COLUMNS` order."""
    return [
        (r.scenario, r.method, r.seed, r.time_to_goal, r.success, r.mae,
         " ".join("-" if v is None else str(v) for v in r.recovery_latency),
         " ".join("-" if v is None else str(v) for v in r.recovery_cycles),
         r.starvation_events, r.stale_events, r.error)
        for r in results
    ]


def summarize(results):
    """One row per ``(scenario, method)`` in :data:`SUMMARY_COLUMNS` order.

    Time-to-goal statistics cover successful runs only (``inf`` if none).
    """
    groups = {}
    for r in results:
        groups.setdefault((r.scenario, r.method), []).append(r)
    rows = []
    for (scen, method), rs in groups.items():
        ttg = [r.time_to_goal for r in rs if r.success]
        rows.append(
            (
                scen,
                method,
                len(rs),
                sum(r.failed for r in rs),
                sum(r.success for r in rs),
                float(np.mean(ttg)) if ttg else math.inf,
                _std(ttg) if ttg else math.nan,
                float(np.mean([r.mae for r in rs])),
                _std([r.mae for r in rs]),
                _median([v for r in rs for v in r.recovery_latency[1:]]),
                _median([v for r in rs for v in r.recovery_cycles[1:]]),
                sum(r.starvation_events for r in rs),
                sum(r.stale_events for r in rs),
            )
        )
    return rows


def write_table(rows, columns, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
    return path


def format_table(rows, columns):
    def cell(v):
        return f"{v:.4g}" if isinstance(v, float) else str(v)

    body = [[cell(v) for v in r] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


def write_gnuplot(results, out_dir):
    """One ``.gp`` script per scenario overlaying the per-run relative errors."""
    out = Path(out_dir)
    scripts = []
    by_scen = {}
    for r in results:
        by_scen.setdefault(r.scenario, []).append(r)
    for scen, rs in by_scen.items():
        plots = [
            f"'{run_stem(r.scenario, r.method, r.seed)}.dat' using 2:3 with lines title '{r.method} s{r.seed}'"
            for r in rs
        ]
        gp = out / f"{scen}.gp"
        gp.write_text(
            "set terminal pngcairo size 900,500\n"
            f"set output '{scen}_error.png'\n"
            "set xlabel 'time [s]'\nset ylabel 'relative parameter error'\nset logscale y\n"
            "plot " + ", \\\n     ".join(plots) + "\n"
        )
        scripts.append(gp)
    return scripts


def scenario_files(paths):
    """Expand directories into their ``*.scenario`` files."""
    out = []
    for p in paths if isinstance(paths, (list, tuple)) else [paths]:
        p = Path(p)
        out.extend(sorted(p.glob("*.scenario")) if p.is_dir() else [p])
    if not out:
        raise InvalidInputError("no scenario files found")
    return out


def run_suite(paths, out_dir, methods=None, seeds=None, max_steps=None, jobs=1):
    """Run every scenario under every method and seed.

    ``seeds`` defaults to each scenario's own list, ``methods`` to all four.
    Writes per-run files plus ``summary.csv`` / ``summary.txt`` and gnuplot
    scripts into ``out_dir``; returns ``(results, summary_rows)``.
    """
    methods = tuple(methods or METHODS)
    for m in methods:
        if m not in METHODS:
            raise InvalidInputError(f"unknown method {m!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    job_list = []
    for path in scenario_files(paths):
        scen = load_scenario(path)
        for seed in seeds if seeds is not None else scen.seeds:
            for method in methods:
                job_list.append((str(path), method, int(seed), str(out), max_steps, {}))
    results = _map(job_list, int(jobs))
    rows = summarize(results)
    write_table(run_rows(results), RUN_COLUMNS, out / "runs.csv")
    write_table(rows, SUMMARY_COLUMNS, out / "summary.csv")
    (out / "summary.txt").write_text(format_table(rows, SUMMARY_COLUMNS) + "\n")
    write_gnuplot(results, out)
    return results, rows


def _with_param(scenario, param, value):
    if param not in SWEEP_PARAMS:
        raise InvalidInputError(f"sweep parameter must be one of {SWEEP_PARAMS}")
    value = int(value) if param in ("H", "T") else float(value)
    return scenario.replace(**{param: value})


SWEEP_COLUMNS = (
    "param",
    "value",
    "runs",
    "failed",
    "success_rate",
    "mean_time_to_goal",
    "mean_mae",
    "median_recovery_steps",
    "stale_events",
)


def sweep(scenario, param, values, seeds=None, method="ours", max_steps=None, out_dir=None):
    """Vary one hyper-parameter; one summary row per value."""
    if isinstance(scenario, (str, Path)):
        scenario = load_scenario(scenario)
    seeds = scenario.seeds if seeds is None else seeds
    rows = []
    for value in values:
        scen = _with_param(scenario, param, value)
        rs = []
        for seed in seeds:
            sub = None if out_dir is None else Path(out_dir) / f"{param}={value}"
            rs.append(run_single(scen, method, seed, sub, max_steps)[0])
        ttg = [r.time_to_goal for r in rs if r.success]
        rows.append(
            (
                param,
                value,
                len(rs),
                sum(r.failed for r in rs),
                sum(r.success for r in rs) / len(rs),
                float(np.mean(ttg)) if ttg else math.inf,
                float(np.mean([r.mae for r in rs])),
                _median([v for r in rs for v in r.recovery_latency[1:]]),
                sum(r.stale_events for r in rs),
            )
        )
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_table(rows, SWEEP_COLUMNS, Path(out_dir) / f"sweep_{param}.csv")
    return rows


START_COLUMNS = ("seed", "adaptive_time_to_goal", "fixed_time_to_goal", "adaptive_starvation",
                 "fixed_starvation", "fixed_stale", "perturbed_adaptive_starvation")


@dataclass(frozen=True)
class StartStudy:
    """Adaptive start versus a fixed offset equal to the mean solve length.

    ``adaptive_*`` come from unperturbed runs; the fixed-offset runs and
    ``perturbed_adaptive_starvation`` use the perturbed solve durations.
    Each tuple has one entry per seed.
    """

    fixed_offset: int
    seeds: tuple
    adaptive_time_to_goal: tuple
    fixed_time_to_goal: tuple
    adaptive_starvation: tuple
    fixed_starvation: tuple
    fixed_stale: tuple
    perturbed_adaptive_starvation: tuple

    def rows(self):
        return list(zip(self.seeds, self.adaptive_time_to_goal, self.fixed_time_to_goal,
                        self.adaptive_starvation, self.fixed_starvation, self.fixed_stale,
                        self.perturbed_adaptive_starvation))

    @property
    def fixed_failures(self):
        return sum(not math.isfinite(t) for t in self.fixed_time_to_goal)


def start_study(scenario, seeds=(0, 1, 2, 3, 4), perturbation=(1.0, 2.0, 1.0, 3.0), max_steps=None):
    """Unperturbed adaptive runs set the fixed offset, then both face ``perturbation``."""
    if isinstance(scenario, (str, Path)):
        scenario = load_scenario(scenario)
    seeds = tuple(int(s) for s in seeds)
    solve_steps, a_ttg, a_starve = [], [], []
    for seed in seeds:
        log, m = run_method(scenario, seed, max_steps=max_steps, start="adaptive")
        solve_steps += log.meta.get("solve_steps", [])
        a_ttg.append(m.time_to_goal)
        a_starve.append(m.starvation_events)
    offset = max(1, int(round(float(np.mean(solve_steps))))) if solve_steps else 1
    f_ttg, f_starve, f_stale, pert = [], [], [], []
    for seed in seeds:
        _, m = run_method(
            scenario, seed, max_steps=max_steps, start="fixed", fixed_offset=offset,
            duration_scale=tuple(perturbation),
        )
        f_ttg.append(m.time_to_goal)
        f_starve.append(m.starvation_events)
        f_stale.append(m.stale_events)
        _, m = run_method(scenario, seed, max_steps=max_steps, duration_scale=tuple(perturbation))
        pert.append(m.starvation_events)
    return StartStudy(offset, seeds, tuple(a_ttg), tuple(f_ttg), tuple(a_starve), tuple(f_starve),
                      tuple(f_stale), tuple(pert))
