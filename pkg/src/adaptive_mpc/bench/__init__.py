"""Benchmark scenarios, baselines, metrics and batch runners."""

from .config import (
    ScenarioSpec,
    SchedulerSettings,
    bundled_models,
    bundled_scenarios,
    load_model,
    load_scenario,
)
from .environment import Environment, make_environment
from .methods import run_method, scheduler_config
from .metrics import Metrics, compute_metrics, recovery_cycles, recovery_latency, relative_error, time_to_goal
from .suite import RunResult, StartStudy, run_single, run_suite, start_study, summarize, sweep

__all__ = [
    "Environment",
    "Metrics",
    "RunResult",
    "ScenarioSpec",
    "SchedulerSettings",
    "StartStudy",
    "bundled_models",
    "bundled_scenarios",
    "compute_metrics",
    "load_model",
    "load_scenario",
    "make_environment",
    "recovery_cycles",
    "recovery_latency",
    "relative_error",
    "run_method",
    "run_single",
    "run_suite",
    "scheduler_config",
    "start_study",
    "summarize",
    "sweep",
    "time_to_goal",
]
