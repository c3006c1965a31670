"""Real-time run: planner and modeler threads beside an executor ticking at dt.

Timing here depends on the machine, so runs are not reproducible; the
virtual-time loop in :mod:`.scheduler` is the one to test against.
"""

from __future__ import annotations

import threading
import time
from dataclasses import replace

import numpy as np

from ..control.ilqr import IlqrOptions, ilqr_solve, lqr_seed
from ..exceptions import ModelInvalidError, RolloutDivergenceError
from ..sysid.estimate import EstimateAccumulator
from .buffers import HistoryBuffer, PlanBuffer, PlanEntry
from .runlog import RunLog
from .scheduler import (
    WALLCLOCK,
    apply_model_job,
    consume_action,
    model_cycle,
    next_iteration_estimate,
    plan_cycle,
    planner_cost,
    profile_planner,
)


class _Shared:
    def __init__(self, params0, config):
        self.lock = threading.Lock()
        self.acc = EstimateAccumulator(params0)
        self.last_confidence = float("nan")
        self.t = 0
        self.x_obs = None
        self.n_prev = config.initial_iterations
        self.cycles = 0
        self.error = None


def run_wallclock(env, model, params0, cost, config, max_steps, goal=None, profile=True):
    """Closed-loop run in real time; returns a :class:`RunLog`.

    With ``profile`` the planner's per-iteration time ``t_e`` is measured
    before the run (the configured value is the floor).
    """
    goal = goal or (lambda x: float(np.linalg.norm(x - cost.target)))
    x0 = np.asarray(env.observe(), dtype=float)
    if profile:
        measured = profile_planner(model, params0, x0, cost, config.T, trials=3, mode=WALLCLOCK)
        config = replace(config, t_e=max(config.t_e, measured))
    labels = params0.labels(model)
    log = RunLog(labels, model.n_act, 2 * model.n_dof, model.dt)
    log.meta["t_e"] = config.t_e
    log_lock = threading.Lock()

    def event(t, kind, detail=""):
        with log_lock:
            log.event(t, kind, detail)

    shared = _Shared(params0, config)
    history = HistoryBuffer(max(config.H + 1, 3) * 2, model.dt)
    buffer = PlanBuffer()
    stop = threading.Event()
    activated = threading.Event()

    iters = config.max_iter if config.prestart_iter is None else config.prestart_iter
    seed = lqr_seed(model, params0, cost, config.T) if config.lqr_seed else None
    sol = ilqr_solve(
        model, params0, x0, planner_cost(cost, model, shared.acc, config), config.T, warm=seed,
        opts=IlqrOptions(max_iter=iters, tol=config.tol, action_limit=config.action_limit),
    )
    buffer.install(PlanEntry(0, sol, 0))

    def planner():
        while not stop.is_set():
            with shared.lock:
                t, x_now, acc, n_prev = shared.t, shared.x_obs, shared.acc, shared.n_prev
                shared.cycles += 1
                cycle = shared.cycles
            if x_now is None:
                time.sleep(model.dt / 4)
                continue
            activated.clear()
            try:
                job = plan_cycle(
                    model, acc.mean, x_now, t, buffer, planner_cost(cost, model, acc, config),
                    config, n_prev, cycle, stop=stop,
                )
            except (ModelInvalidError, RolloutDivergenceError) as exc:
                shared.error = exc
                stop.set()
                return
            with shared.lock:
                now = shared.t
                shared.n_prev = next_iteration_estimate(job, config)
            if now > job.entry.start:
                event(now, "stale_plan", f"cycle {cycle} ready {now - job.entry.start} steps late")
            buffer.stage(job.entry)
            with log_lock:
                log.meta.setdefault("solve_steps", []).append(now - t)
            # the next cycle starts once this plan is in use
            while not stop.is_set() and not activated.wait(model.dt):
                pass

    def modeler():
        while not stop.is_set():
            with shared.lock:
                t, acc = shared.t, shared.acc
            job = model_cycle(model, history, acc, config, t)
            if job is None:
                time.sleep(model.dt / 2)
                continue
            with shared.lock:
                shared.acc = apply_model_job(shared.acc, job, config)
                shared.last_confidence = job.confidence
                kind = shared.acc.last_event.value
                now = shared.t
            event(now, "model_update", kind)
            if kind == "explore":
                event(now, "mode", "explore")

    threads = [threading.Thread(target=planner, daemon=True), threading.Thread(target=modeler, daemon=True)]
    t0 = time.perf_counter()
    x_obs = x0
    started = False
    try:
        for t in range(int(max_steps)):
            if t > 0:
                x_obs = np.asarray(env.observe(), dtype=float)
            history.push_state(t, x_obs)
            with shared.lock:
                shared.t, shared.x_obs = t, x_obs
                acc, conf = shared.acc, shared.last_confidence
            if not started:
                for th in threads:
                    th.start()
                started = True
            if buffer.advance(t):
                event(t, "plan_swap", f"cycle {buffer.active.cycle}")
                activated.set()
            u, starved = consume_action(buffer, t, x_obs, model.n_act)
            if starved:
                event(t, "starvation", "terminal-gain hold")
            staged = buffer.staged
            stale = starved or (staged is not None and staged.start < t)
            history.record_action(t, u)
            true_vals = np.array(env.true_values, dtype=float)
            distance = goal(env.true_state)
            env.apply(u)
            with log_lock:
                log.append(t, true_vals, acc.mean.values, conf, acc.mode.value, u, x_obs, distance, stale)
            if shared.error is not None:
                exc = shared.error
                event(t, "error", f"{type(exc).__name__}: {exc}")
                log.meta["error_step"] = t
                break
            wait = t0 + (t + 1) * model.dt - time.perf_counter()
            if wait > 0:
                time.sleep(wait)
            elif -wait > model.dt:
                log.meta["overruns"] = log.meta.get("overruns", 0) + 1
    finally:
        stop.set()
        activated.set()
        for th in threads:
            if th.is_alive():
                th.join(timeout=max(1.0, 10 * config.t_e * config.max_iter))
    log.meta["cycles"] = shared.cycles
    log.meta["wall_time"] = time.perf_counter() - t0
    return log

