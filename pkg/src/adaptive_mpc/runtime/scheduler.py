"""Planner/modeler orchestration in deterministic virtual time.

The virtual clock advances one control step per tick. Work items are
computed immediately but only published once their charged duration has
elapsed: a planner solve costs ``t_e`` seconds per iteration and a fit costs
``fit_steps`` ticks. Within a tick the order is: observe, modeler, planner,
execute.

The environment passed to :func:`run` needs ``observe() -> x``,
``apply(u)``, ``true_state`` and ``true_values``.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..control.costs import EXPLORE, CostSpec
from ..control.ilqr import IlqrOptions, ilqr_solve, lqr_seed
from ..dynamics.api import step as dyn_step
from ..exceptions import InvalidInputError, ModelInvalidError, RolloutDivergenceError
from ..sysid.confidence import confidence_score, scored_entities
from ..sysid.estimate import EstimateAccumulator, Mode, make_updater
from ..sysid.fit import FitOptions, fit_parameters
from .buffers import HistoryBuffer, PlanBuffer, PlanEntry
from .runlog import RunLog

VIRTUAL = "virtual"
WALLCLOCK = "wallclock"


@dataclass(frozen=True)
class SchedulerConfig:
    """Timing and estimation settings for one run.

    ``t_e`` is the (profiled) duration of one planner iteration in seconds.
    With ``start="adaptive"`` a plan starts ``ceil(t_e * N / dt)`` steps
    after its solve begins, ``N`` being the previous solve's iteration
    count (``n_iter_init`` for the first solve); ``honest`` caps the
    iterations so the solve always fits that window. ``start="fixed"`` uses
    ``fixed_offset`` steps and no cap. ``duration_scale`` multiplies the
    charged duration of successive solves, modelling a planner that runs
    slower or faster than profiled. The plan installed before the first
    step gets ``prestart_iter`` iterations (default ``max_iter``) and, with
    ``lqr_seed``, starts from finite-horizon LQR gains about the target.
    """

    t_e: float
    H: int
    T: int
    eps1: float
    eps2: float
    n_his: int = 5
    max_iter: int = 5
    tol: float = 1e-4
    n_iter_init: int | None = None
    fit_steps: int = 2
    fit_iter: int = 10
    fit_velocity_weight: float | None = None
    mode: str = VIRTUAL
    start: str = "adaptive"
    fixed_offset: int | None = None
    duration_scale: tuple = ()
    honest: bool = True
    method: str = "ours"
    window: int = 5
    include_coriolis: bool = False
    explore_enabled: bool = True
    explore_weight: float = 1.0
    action_limit: np.ndarray | None = None
    prestart_iter: int | None = None
    lqr_seed: bool = False

    def __post_init__(self):
        if not self.t_e > 0:
            raise InvalidInputError("t_e must be positive")
        if self.H < 2 or self.T < 1:
            raise InvalidInputError("need H >= 2 and T >= 1")
        if self.mode not in (VIRTUAL, WALLCLOCK):
            raise InvalidInputError(f"mode must be {VIRTUAL!r} or {WALLCLOCK!r}")
        if self.start not in ("adaptive", "fixed"):
            raise InvalidInputError("start must be 'adaptive' or 'fixed'")
        if self.start == "fixed" and (self.fixed_offset is None or self.fixed_offset < 1):
            raise InvalidInputError("fixed start needs fixed_offset >= 1")
        if any(s <= 0 for s in self.duration_scale):
            raise InvalidInputError("duration_scale entries must be positive")

    @property
    def initial_iterations(self):
        return self.max_iter if self.n_iter_init is None else self.n_iter_init


def profile_planner(model, params, x0, cost, T, trials=5, mode=WALLCLOCK, t_e=None, max_iter=3):
    """Median wall time of one planner iteration, in seconds.

    In virtual mode the configured ``t_e`` is returned unchanged.
    """
    if mode == VIRTUAL:
        if t_e is None:
            raise InvalidInputError("virtual mode needs a configured t_e")
        return float(t_e)
    if trials < 1:
        raise InvalidInputError("profiling needs at least one trial")
    opts = IlqrOptions(max_iter=max_iter, tol=0.0)
    ilqr_solve(model, params, x0, cost, T, opts=opts)  # compile outside the timing
    samples = []
    for _ in range(trials):
        start = time.perf_counter()
        sol = ilqr_solve(model, params, x0, cost, T, opts=opts)
        elapsed = time.perf_counter() - start
        samples.append(elapsed / max(sol.n_iter, 1))
    return float(statistics.median(samples))


# --------------------------------------------------------------------------- cycles


def planner_cost(cost: CostSpec, model, acc: EstimateAccumulator, config: SchedulerConfig):
    """Task objective, or the exploration objective while the estimate asks for it."""
    if acc.mode != Mode.EXPLORE or not config.explore_enabled:
        return cost.task() if cost.kind == EXPLORE else cost
    group = acc.mean.groups[0]
    joints = None
    if group in ("stiffness", "damping"):
        joints = tuple(scored_entities(model, acc.mean, group))
    return cost.explore(
        group, config.explore_weight, model=model, params=acc.mean, joints=joints,
        center=np.asarray(model.rest_pose),
    )


def bridge_state(model, params, x_now, t, t_hat, buffer: PlanBuffer):
    """Predict the state at ``t_hat`` by simulating the buffered feedback law."""
    x = np.asarray(x_now, dtype=float)
    for s in range(t, t_hat):
        entry = buffer.lookup(s)
        if entry is not None:
            u = entry.action(s, x)
        else:
            last = buffer.latest()
            u = last.fallback_action(x) if last is not None else np.zeros(model.n_act)
        try:
            x = dyn_step(model, params, x, u)
        except ModelInvalidError:
            return None
    return x


@dataclass
class PlanJob:
    cycle: int
    spawn: int
    entry: PlanEntry
    ready: int
    n_used: int
    converged: bool
    staged: bool = False


def plan_cycle(
    model,
    params,
    x_now,
    t,
    buffer: PlanBuffer,
    cost: CostSpec,
    config: SchedulerConfig,
    n_prev,
    cycle=1,
    stop=None,
):
    """Solve the next plan; returns a :class:`PlanJob` with its start and ready times.

    The plan starts at ``t_hat`` (adaptive or fixed offset). The initial state
    comes from bridging the current observation through the buffered plan;
    if that diverges the solve starts from ``x_now`` instead.
    """
    dt = model.dt
    if config.start == "adaptive":
        offset = max(1, math.ceil(config.t_e * n_prev / dt - 1e-9))
    else:
        offset = int(config.fixed_offset)
    t_hat = t + offset
    iters = config.max_iter
    if config.start == "adaptive" and config.honest:
        iters = min(iters, int(math.floor(offset * dt / config.t_e + 1e-9)))
    x_hat = bridge_state(model, params, x_now, t, t_hat, buffer)
    if x_hat is None:
        x_hat = np.asarray(x_now, dtype=float)
    warm_entry = buffer.latest()
    warm = warm_entry.solution if warm_entry is not None else None
    w_off = t_hat - warm_entry.start if warm_entry is not None else 0
    opts = IlqrOptions(max_iter=iters, tol=config.tol, action_limit=config.action_limit)
    sol = ilqr_solve(model, params, x_hat, cost, config.T, warm=warm, offset=w_off, opts=opts, stop=stop)
    scale = config.duration_scale[(cycle - 1) % len(config.duration_scale)] if config.duration_scale else 1.0
    duration = math.ceil(scale * config.t_e * sol.n_passes / dt - 1e-9)
    entry = PlanEntry(t_hat, sol, cycle)
    return PlanJob(cycle, t, entry, t + duration, sol.n_passes, sol.converged)


def next_iteration_estimate(job: PlanJob, config: SchedulerConfig):
    """Iterations to budget for the following solve."""
    if job.converged:
        return job.n_used
    return min(config.max_iter, job.n_used + 1)


@dataclass
class ModelJob:
    start: int
    ready: int
    solution: object
    confidence: float
    residual: float


def model_cycle(model, history: HistoryBuffer, acc: EstimateAccumulator, config: SchedulerConfig, t=0):
    """Fit and score the newest batch; ``None`` while the history is too short.

    The returned job carries the solution; :func:`apply_model_job` folds it
    into the estimate.
    """
    batch = history.recent_batch(config.H)
    if batch is None:
        return None
    try:
        fit = fit_parameters(model, batch, acc.mean, FitOptions(max_iter=config.fit_iter, velocity_weight=config.fit_velocity_weight))
    except RolloutDivergenceError:
        return None
    score = confidence_score(model, fit.params, batch, include_coriolis=config.include_coriolis)
    return ModelJob(t, t + config.fit_steps, fit.params, score.normalized, fit.residual)


def apply_model_job(acc, job: ModelJob, config: SchedulerConfig):
    updater = make_updater(config.method, config.eps1, config.eps2, config.n_his, config.window)
    return updater(acc, job.solution, job.confidence)


def consume_action(buffer: PlanBuffer, t, x, n_act):
    """Action for step ``t``; returns ``(u, starved)``.

    When no plan covers ``t`` the most recent plan's terminal gains hold the
    system around its terminal nominal state.
    """
    entry = buffer.lookup(t)
    if entry is not None:
        return entry.action(t, x), False
    last = buffer.latest()
    if last is None:
        return np.zeros(n_act), True
    return last.fallback_action(x), True


# --------------------------------------------------------------------------- run


@dataclass
class RunState:
    acc: EstimateAccumulator
    history: HistoryBuffer
    buffer: PlanBuffer = field(default_factory=PlanBuffer)
    plan_job: PlanJob | None = None
    model_job: ModelJob | None = None
    n_prev: int = 0
    cycles: int = 0
    last_confidence: float = float("nan")


def run(env, model, params0, cost: CostSpec, config: SchedulerConfig, max_steps, goal=None, stop_at_goal=False):
    """Closed-loop run; returns a :class:`RunLog`.

    ``goal(true_state) -> distance`` fills the goal-distance column
    (defaults to the distance to the cost target).
    """
    if config.mode == WALLCLOCK:
        from .wallclock import run_wallclock

        return run_wallclock(env, model, params0, cost, config, max_steps, goal)
    goal = goal or (lambda x: float(np.linalg.norm(x - cost.target)))
    labels = params0.labels(model)
    log = RunLog(labels, model.n_act, 2 * model.n_dof, model.dt)
    state = RunState(EstimateAccumulator(params0), HistoryBuffer(max(config.H + 1, 3) * 2, model.dt))
    state.n_prev = config.initial_iterations

    for t in range(int(max_steps)):
        try:
            _tick(t, env, model, cost, config, state, log, goal)
        except (ModelInvalidError, RolloutDivergenceError) as exc:
            log.event(t, "error", f"{type(exc).__name__}: {exc}")
            log.meta["error_step"] = t
            break
        if stop_at_goal and log.goal_distance[-1] <= stop_at_goal:
            break
    log.meta["cycles"] = state.cycles
    return log


def _tick(t, env, model, cost, config, state: RunState, log: RunLog, goal):
    x_obs = np.asarray(env.observe(), dtype=float)
    state.history.push_state(t, x_obs)

    # modeler
    job = state.model_job
    if job is not None and job.ready <= t:
        state.acc = apply_model_job(state.acc, job, config)
        state.last_confidence = job.confidence
        log.event(t, "model_update", state.acc.last_event.value)
        if state.acc.last_event.value == "explore":
            log.event(t, "mode", "explore")
        state.model_job = None
    if state.model_job is None:
        state.model_job = model_cycle(model, state.history, state.acc, config, t)

    # planner
    snapshot = state.acc.mean
    if t == 0:
        iters = config.max_iter if config.prestart_iter is None else config.prestart_iter
        seed = lqr_seed(model, snapshot, cost, config.T) if config.lqr_seed else None
        sol = ilqr_solve(
            model, snapshot, x_obs, planner_cost(cost, model, state.acc, config), config.T,
            warm=seed,
            opts=IlqrOptions(max_iter=iters, tol=config.tol, action_limit=config.action_limit),
        )
        state.buffer.install(PlanEntry(0, sol, 0))
    pj = state.plan_job
    if pj is not None and not pj.staged and pj.ready <= t:
        state.buffer.stage(pj.entry)
        pj.staged = True
        log.meta.setdefault("solve_steps", []).append(pj.ready - pj.spawn)
        if pj.ready > pj.entry.start:
            log.event(t, "stale_plan", f"cycle {pj.cycle} ready {pj.ready - pj.entry.start} steps late")
        state.n_prev = next_iteration_estimate(pj, config)
    if state.buffer.advance(t):
        log.event(t, "plan_swap", f"cycle {state.buffer.active.cycle}")
        state.plan_job = None
    if state.plan_job is None and state.buffer.staged is None:
        state.cycles += 1
        state.plan_job = plan_cycle(
            model, snapshot, x_obs, t, state.buffer, planner_cost(cost, model, state.acc, config),
            config, state.n_prev, state.cycles,
        )

    # execute
    u, starved = consume_action(state.buffer, t, x_obs, model.n_act)
    if starved:
        log.event(t, "starvation", "terminal-gain hold")
    pj = state.plan_job
    stale = starved or (pj is not None and not pj.staged and pj.entry.start <= t)
    state.history.record_action(t, u)
    true_vals = np.array(env.true_values, dtype=float)
    distance = goal(env.true_state)
    env.apply(u)
    log.append(
        t, true_vals, state.acc.mean.values, state.last_confidence, state.acc.mode.value,
        u, x_obs, distance, stale,
    )


def with_overrides(config: SchedulerConfig, **changes):
    return replace(config, **changes)
