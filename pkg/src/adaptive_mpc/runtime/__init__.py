"""Closed-loop runtime: buffers, run logs and the planner/modeler scheduler."""

from .buffers import HistoryBuffer, PlanBuffer, PlanEntry
from .runlog import Event, RunLog, read_runlog
from .scheduler import (
    VIRTUAL,
    WALLCLOCK,
    SchedulerConfig,
    apply_model_job,
    bridge_state,
    consume_action,
    model_cycle,
    plan_cycle,
    profile_planner,
    run,
    with_overrides,
)
from .wallclock import run_wallclock

__all__ = [
    "Event",
    "HistoryBuffer",
    "PlanBuffer",
    "PlanEntry",
    "RunLog",
    "SchedulerConfig",
    "VIRTUAL",
    "WALLCLOCK",
    "apply_model_job",
    "bridge_state",
    "consume_action",
    "model_cycle",
    "plan_cycle",
    "profile_planner",
    "read_runlog",
    "run",
    "run_wallclock",
    "with_overrides",
]
