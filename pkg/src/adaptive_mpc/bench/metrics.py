"""Run metrics computed from a :class:`RunLog` alone."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    """``time_to_goal`` is in seconds (``inf`` on failure).

    ``recovery_latency`` holds, for each change of the true parameters, the
    steps until the estimate's relative error first drops below ``rel_tol``
    (``None`` if it never does before the next change or the end of the run);
    ``recovery_cycles`` counts the same window in completed model cycles.
    """

    time_to_goal: float
    success: bool
    mae: float
    mae_trace: np.ndarray
    recovery_latency: tuple
    recovery_cycles: tuple
    change_steps: tuple
    starvation_events: int
    stale_events: int
    stale_fraction: float
    explore_steps: int


def relative_error(log):
    arr = log.as_arrays()
    true, est = arr["true"], arr["est"]
    return np.linalg.norm(est - true, axis=1) / np.maximum(np.linalg.norm(true, axis=1), 1e-12)


def time_to_goal(log, tol=0.1, max_steps=1000):
    dist = np.asarray(log.goal_distance)[:max_steps]
    hits = np.nonzero(dist <= tol)[0]
    if hits.size == 0:
        return math.inf
    return float(log.steps[hits[0]] * log.dt)


def change_steps(log):
    arr = log.as_arrays()
    true = arr["true"]
    if len(true) < 2:
        return ()
    changed = np.nonzero(np.any(true[1:] != true[:-1], axis=1))[0] + 1
    return tuple(int(arr["steps"][i]) for i in changed)


def recovery_latency(log, rel_tol=0.05):
    """Latency after the start and after each change, in steps."""
    err = relative_error(log)
    steps = np.asarray(log.steps)
    bounds = [int(steps[0]) if len(steps) else 0] + list(change_steps(log))
    out = []
    for i, start in enumerate(bounds):
        end = bounds[i + 1] if i + 1 < len(bounds) else int(steps[-1]) + 1
        mask = (steps >= start) & (steps < end)
        hit = np.nonzero(err[mask] < rel_tol)[0]
        out.append(int(steps[mask][hit[0]] - start) if hit.size else None)
    return tuple(out)


def recovery_cycles(log, rel_tol=0.05):
    """Like :func:`recovery_latency` but counts completed model cycles.

    A model cycle completes at every ``model_update`` event, whether the
    solution was blended, replaced or rejected.
    """
    cycle_steps = np.asarray([e.step for e in log.events_of("model_update")], dtype=int)
    starts = [int(log.steps[0]) if len(log) else 0] + list(change_steps(log))
    out = []
    for start, lat in zip(starts, recovery_latency(log, rel_tol)):
        if lat is None:
            out.append(None)
            continue
        hit = start + lat
        out.append(int(np.count_nonzero((cycle_steps >= start) & (cycle_steps <= hit))))
    return tuple(out)


def compute_metrics(log, goal_tol=0.1, max_steps=1000, rel_tol=0.05):
    arr = log.as_arrays()
    mae_trace = np.mean(np.abs(arr["est"] - arr["true"]), axis=1) if len(log) else np.zeros(0)
    ttg = time_to_goal(log, goal_tol, max_steps)
    return Metrics(
        time_to_goal=ttg,
        success=math.isfinite(ttg),
        mae=float(mae_trace.mean()) if mae_trace.size else float("nan"),
        mae_trace=mae_trace,
        recovery_latency=recovery_latency(log, rel_tol),
        recovery_cycles=recovery_cycles(log, rel_tol),
        change_steps=change_steps(log),
        starvation_events=len(log.events_of("starvation")),
        stale_events=len(log.events_of("stale_plan")),
        stale_fraction=float(np.mean(arr["stale"])) if len(log) else 0.0,
        explore_steps=int(sum(m == "explore" for m in log.modes)),
    )
