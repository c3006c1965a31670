"""Run one scenario with one estimate-update method."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..runtime.scheduler import SchedulerConfig, run
from .environment import make_environment
from .metrics import compute_metrics


def scheduler_config(scenario, method=None, **overrides):
    s = scenario.scheduler
    cfg = SchedulerConfig(
        t_e=s.t_e,
        H=scenario.H,
        T=scenario.T,
        eps1=scenario.eps1,
        eps2=scenario.eps2,
        n_his=scenario.n_his,
        max_iter=scenario.max_iter,
        tol=scenario.tol,
        n_iter_init=s.n_iter_init,
        fit_steps=s.fit_steps,
        fit_iter=scenario.fit_iter,
        fit_velocity_weight=scenario.fit_velocity_weight,
        mode=s.mode,
        start=s.start,
        fixed_offset=s.fixed_offset,
        duration_scale=tuple(s.duration_scale),
        honest=s.honest,
        method=method or scenario.method,
        include_coriolis=scenario.include_coriolis,
        explore_enabled=scenario.explore_enabled,
        explore_weight=scenario.explore_weight,
        action_limit=scenario.action_limit,
        lqr_seed=scenario.lqr_seed,
        prestart_iter=scenario.prestart_iter,
    )
    return replace(cfg, **overrides) if overrides else cfg


def run_method(scenario, seed=0, method=None, max_steps=None, config=None, **overrides):
    """Returns ``(RunLog, Metrics)``.

    ``overrides`` replace :class:`SchedulerConfig` fields; ``config`` replaces
    the whole configuration.
    """
    cfg = config or scheduler_config(scenario, method, **overrides)
    env = make_environment(scenario, seed)
    steps = scenario.max_steps if max_steps is None else int(max_steps)
    log = run(env, scenario.model, scenario.params, scenario.cost, cfg, steps)
    log.meta.update(
        {"scenario": scenario.name, "seed": int(seed), "method": cfg.method, "start": cfg.start}
    )
    return log, compute_metrics(log, scenario.goal_tol, min(steps, 1000))
