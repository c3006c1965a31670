"""TOML model and scenario files.

Model files (``*.model.toml``) list links in tree order, each with a
``[links.joint]`` table naming its parent link. Scenario files
(``*.scenario``) are TOML too; see ``data/cartpole.scenario`` for every
supported key.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..control.costs import CostSpec, diagonal_cost
from ..dynamics.model import JointSpec, LinkSpec, ModelSpec, rpy_to_matrix
from ..exceptions import InvalidInputError, ScenarioError
from ..sysid.params import (
    JointDamping,
    JointStiffness,
    LinkComAxis,
    LinkInertiaAxis,
    LinkMass,
    SystemParams,
)

DATA_DIR = Path(__file__).parent / "data"
_AXES = {"x": 0, "y": 1, "z": 2}
METHODS = ("ours", "naive", "smooth", "weighted")


def _locate(text, key):
    """1-based line of the first ``key = ...`` assignment, if any."""
    if text is None:
        return None
    leaf = key.split(".")[-1].split("[")[0]
    pat = re.compile(rf"^\s*{re.escape(leaf)}\s*=")
    for no, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return no
    return None


class _Reader:
    """Typed access to a parsed TOML table with field-named errors."""

    def __init__(self, table, path, text, prefix=""):
        self.table = table
        self.path = path
        self.text = text
        self.prefix = prefix

    def fail(self, key, message):
        name = f"{self.prefix}{key}"
        raise ScenarioError(name, message, self.path, _locate(self.text, name))

    def sub(self, key, required=False):
        val = self.table.get(key)
        if val is None:
            if required:
                self.fail(key, "missing table")
            val = {}
        if not isinstance(val, dict):
            self.fail(key, "expected a table")
        return _Reader(val, self.path, self.text, f"{self.prefix}{key}.")

    def has(self, key):
        return key in self.table

    def get(self, key, default=None, required=False):
        if key not in self.table:
            if required:
                self.fail(key, "missing required key")
            return default
        return self.table[key]

    def number(self, key, default=None, required=False, lo=None, hi=None, integer=False):
        val = self.get(key, default, required)
        if val is None:
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            self.fail(key, f"expected a number, got {val!r}")
        if integer and (not float(val).is_integer()):
            self.fail(key, f"expected an integer, got {val!r}")
        if not np.isfinite(val):
            self.fail(key, "must be finite")
        if lo is not None and val < lo:
            self.fail(key, f"must be >= {lo}, got {val}")
        if hi is not None and val > hi:
            self.fail(key, f"must be <= {hi}, got {val}")
        return int(val) if integer else float(val)

    def vector(self, key, size=None, default=None, required=False):
        val = self.get(key, default, required)
        if val is None:
            return None
        if np.isscalar(val):
            val = [val]
        try:
            arr = np.asarray(val, dtype=float)
        except (TypeError, ValueError):
            self.fail(key, f"expected a list of numbers, got {val!r}")
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            self.fail(key, "expected a flat list of finite numbers")
        if size is not None and arr.size != size:
            if arr.size == 1:
                arr = np.full(size, arr[0])
            else:
                self.fail(key, f"expected {size} entries, got {arr.size}")
        return arr

    def string(self, key, default=None, required=False, choices=None):
        val = self.get(key, default, required)
        if val is None:
            return None
        if not isinstance(val, str):
            self.fail(key, f"expected a string, got {val!r}")
        if choices is not None and val not in choices:
            self.fail(key, f"must be one of {list(choices)}, got {val!r}")
        return val


def _parse(path):
    path = Path(path)
    if not path.exists():
        raise ScenarioError("<file>", "file not found", str(path))
    text = path.read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ScenarioError("<syntax>", str(exc), str(path), int(m.group(1)) if m else None) from exc
    return data, text


# --------------------------------------------------------------------------- models


def model_from_dict(data, path=None, text=None):
    top = _Reader(data, path, text)
    name = top.string("name", required=True)
    dt = top.number("dt", 0.01, lo=1e-6)
    gravity = top.vector("gravity", 3, default=[0.0, 0.0, -9.8])
    raw_links = top.get("links", required=True)
    if not isinstance(raw_links, list) or not raw_links:
        top.fail("links", "expected a non-empty array of tables")
    links, joints, actuated, rest = [], [], [], []
    names = {}
    for k, raw in enumerate(raw_links):
        rd = _Reader(raw, path, text, f"links[{k}].")
        lname = rd.string("name", required=True)
        if lname in names:
            rd.fail("name", f"duplicate link name {lname!r}")
        extent = rd.get("extent", [[-0.1, -0.1, -0.1], [0.1, 0.1, 0.1]])
        try:
            links.append(
                LinkSpec(
                    lname,
                    rd.number("mass", required=True),
                    tuple(rd.vector("com", 3, default=[0, 0, 0])),
                    tuple(rd.vector("inertia", 3, default=[1e-3] * 3)),
                    (tuple(extent[0]), tuple(extent[1])),
                )
            )
        except (InvalidInputError, TypeError, IndexError) as exc:
            rd.fail("mass", str(exc))
        jd = rd.sub("joint", required=True)
        parent_name = jd.string("parent", "")
        if parent_name and parent_name not in names:
            jd.fail("parent", f"unknown or later link {parent_name!r}")
        rot = rpy_to_matrix(jd.vector("rpy", 3, default=[0, 0, 0]))
        try:
            joints.append(
                JointSpec(
                    jd.string("name", f"{lname}_joint"),
                    jd.string("type", required=True, choices=("revolute", "prismatic")),
                    names[parent_name] if parent_name else -1,
                    tuple(jd.vector("axis", 3, required=True)),
                    tuple(jd.vector("origin", 3, default=[0, 0, 0])),
                    tuple(map(tuple, rot)),
                    jd.number("stiffness", 0.0, lo=0.0),
                    jd.number("damping", 0.0, lo=0.0),
                )
            )
        except InvalidInputError as exc:
            jd.fail("axis", str(exc))
        if jd.get("actuated", False):
            actuated.append(k)
        rest.append(jd.number("rest", 0.0))
        names[lname] = k
    return ModelSpec(name, tuple(links), tuple(joints), dt, tuple(gravity), tuple(actuated), tuple(rest))


def load_model(path):
    path = _resolve(path)
    data, text = _parse(path)
    return model_from_dict(data, str(path), text)


def _resolve(path, base=None, suffix=".model.toml"):
    """Find ``path`` as given, next to ``base``, or among the bundled files."""
    path = Path(path)
    candidates = [path]
    if base is not None:
        candidates.append(Path(base) / path)
    candidates += [DATA_DIR / path, DATA_DIR / f"{path}{suffix}"]
    for cand in candidates:
        if cand.exists():
            return cand
    return path


# --------------------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class SchedulerSettings:
    """Virtual-time planner/modeler settings.

    ``t_e`` is the charged duration of one planner iteration in seconds;
    ``fit_steps`` the modeler's charge per fit in steps. ``start`` chooses
    the adaptive start time or a fixed offset of ``fixed_offset`` steps.
    ``duration_scale`` multiplies the actual duration of successive solves
    (cycled) while the start time is still predicted with ``t_e``.
    """

    mode: str = "virtual"
    t_e: float = 0.01
    fit_steps: int = 2
    start: str = "adaptive"
    fixed_offset: int | None = None
    n_iter_init: int | None = None
    duration_scale: tuple = ()
    honest: bool = True


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    model: ModelSpec
    params: SystemParams
    true_values: np.ndarray
    schedule: tuple
    initial_state: np.ndarray
    cost: CostSpec
    H: int
    T: int
    eps1: float
    eps2: float
    n_his: int
    max_iter: int
    tol: float
    fit_iter: int
    fit_velocity_weight: float | None = None
    sigma_state: float = 1e-3
    sigma_action: float = 1e-2
    method: str = "ours"
    max_steps: int = 1000
    seeds: tuple = (0,)
    goal_tol: float = 0.1
    include_coriolis: bool = False
    explore_enabled: bool = True
    explore_weight: float = 1.0
    action_limit: np.ndarray | None = None
    lqr_seed: bool = False
    prestart_iter: int | None = None
    scheduler: SchedulerSettings = field(default_factory=SchedulerSettings)
    path: str | None = None

    def true_values_at(self, step):
        vals = self.true_values
        for when, values in self.schedule:
            if step >= when:
                vals = values
        return vals

    def replace(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)


_KINDS = ("mass", "inertia", "com", "stiffness", "damping")


def _target(model, rd, kind):
    if kind in ("stiffness", "damping"):
        jname = rd.string("joint", required=True)
        try:
            j = model.joint_index(jname)
        except KeyError:
            rd.fail("joint", f"unknown joint {jname!r}")
        return JointStiffness(j) if kind == "stiffness" else JointDamping(j)
    lname = rd.string("link", required=True)
    try:
        k = model.link_index(lname)
    except KeyError:
        rd.fail("link", f"unknown link {lname!r}")
    if kind == "mass":
        return LinkMass(k)
    axis = _AXES[rd.string("axis", required=True, choices=tuple(_AXES))]
    return LinkInertiaAxis(k, axis) if kind == "inertia" else LinkComAxis(k, axis)


def scenario_from_dict(data, path=None, text=None, base_dir=None):
    top = _Reader(data, path, text)
    name = top.string("name", required=True)
    model_ref = top.string("model", required=True)
    model_path = _resolve(model_ref, base_dir)
    if not model_path.exists():
        top.fail("model", f"model file {model_ref!r} not found")
    model = load_model(model_path)
    n = model.n_dof

    raw_unknowns = top.get("unknowns", required=True)
    if not isinstance(raw_unknowns, list) or not raw_unknowns:
        top.fail("unknowns", "expected a non-empty array of tables")
    targets, lower, upper, init = [], [], [], []
    for i, raw in enumerate(raw_unknowns):
        rd = _Reader(raw, path, text, f"unknowns[{i}].")
        kind = rd.string("kind", required=True, choices=_KINDS)
        targets.append(_target(model, rd, kind))
        rng = rd.vector("range", 2, required=True)
        if rng[0] > rng[1]:
            rd.fail("range", "lower bound exceeds upper bound")
        lower.append(rng[0])
        upper.append(rng[1])
        init.append(rd.number("initial", 0.5 * (rng[0] + rng[1]), lo=rng[0], hi=rng[1]))
    try:
        params = SystemParams(tuple(targets), init, lower, upper).check_compatible(model)
    except InvalidInputError as exc:
        top.fail("unknowns", str(exc))
    lower, upper = np.asarray(lower), np.asarray(upper)

    def bounded(rd, key, default=None, required=False):
        vals = rd.vector(key, len(targets), default=default, required=required)
        if np.any(vals < lower) or np.any(vals > upper):
            rd.fail(key, f"values {vals.tolist()} outside declared ranges")
        return vals

    truth = top.sub("truth", required=True)
    true_values = bounded(truth, "values", required=True)
    schedule, last = [], 0
    for i, raw in enumerate(top.get("schedule", []) or []):
        rd = _Reader(raw, path, text, f"schedule[{i}].")
        when = rd.number("step", required=True, lo=1, integer=True)
        if when <= last:
            rd.fail("step", "schedule steps must be strictly increasing")
        last = when
        schedule.append((when, bounded(rd, "values", required=True)))

    init_tab = top.sub("initial")
    x0 = np.concatenate(
        [init_tab.vector("q", n, default=[0.0] * n), init_tab.vector("qdot", n, default=[0.0] * n)]
    )
    task = top.sub("task", required=True)
    target = task.vector("target", 2 * n, required=True)
    act = task.vector("r_action", model.n_act, default=[1e-2] * max(model.n_act, 1))
    cost = diagonal_cost(
        target,
        task.vector("q_running", 2 * n, default=[0.0] * (2 * n)),
        task.vector("q_final", 2 * n, default=[1.0] * (2 * n)),
        act,
        center=np.asarray(model.rest_pose),
    )
    limit = task.vector("action_limit", model.n_act) if task.has("action_limit") else None

    noise = top.sub("noise")
    hyper = top.sub("hyper", required=True)
    explore = top.sub("explore")
    sched = top.sub("scheduler")
    scale = sched.vector("duration_scale", default=[])
    if np.any(scale <= 0):
        sched.fail("duration_scale", "entries must be positive")
    fixed_offset = sched.number("fixed_offset", None, lo=1, integer=True)
    settings = SchedulerSettings(
        mode=sched.string("mode", "virtual", choices=("virtual", "wallclock")),
        t_e=sched.number("t_e", 0.01, lo=1e-9),
        fit_steps=sched.number("fit_steps", 2, lo=1, integer=True),
        start=sched.string("start", "adaptive", choices=("adaptive", "fixed")),
        fixed_offset=fixed_offset,
        n_iter_init=sched.number("n_iter_init", None, lo=0, integer=True),
        duration_scale=tuple(scale.tolist()),
        honest=bool(sched.get("honest", True)),
    )
    seeds = top.get("seeds", [0])
    if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds) or not seeds:
        top.fail("seeds", "expected a non-empty list of integers")
    H = hyper.number("H", required=True, lo=2, integer=True)
    return ScenarioSpec(
        name=name,
        model=model,
        params=params,
        true_values=true_values,
        schedule=tuple(schedule),
        initial_state=x0,
        cost=cost,
        H=H,
        T=hyper.number("T", required=True, lo=1, integer=True),
        eps1=hyper.number("eps1", required=True, lo=0.0),
        eps2=hyper.number("eps2", required=True, lo=0.0),
        n_his=hyper.number("N_his", 5, lo=1, integer=True),
        max_iter=hyper.number("max_iter", 5, lo=1, integer=True),
        tol=hyper.number("tol", 1e-4, lo=0.0),
        fit_iter=hyper.number("fit_iter", 10, lo=1, integer=True),
        fit_velocity_weight=hyper.number("fit_velocity_weight", None, lo=0.0),
        sigma_state=noise.number("state", 1e-3, lo=0.0),
        sigma_action=noise.number("action", 1e-2, lo=0.0),
        method=top.string("method", "ours", choices=METHODS),
        max_steps=top.number("max_steps", 1000, lo=1, integer=True),
        seeds=tuple(seeds),
        goal_tol=top.number("goal_tol", 0.1, lo=0.0),
        include_coriolis=bool(hyper.get("include_coriolis", False)),
        explore_enabled=bool(explore.get("enabled", True)),
        explore_weight=explore.number("weight", 1.0, lo=0.0),
        action_limit=limit,
        lqr_seed=bool(hyper.get("lqr_seed", False)),
        prestart_iter=hyper.number("prestart_iter", None, lo=0, integer=True),
        scheduler=settings,
        path=None if path is None else str(path),
    )


def load_scenario(path):
    """Parse a scenario file; schema violations raise :class:`ScenarioError`."""
    path = _resolve(path, suffix=".scenario")
    data, text = _parse(path)
    return scenario_from_dict(data, str(path), text, base_dir=path.parent)


def bundled_scenarios():
    return sorted(DATA_DIR.glob("*.scenario"))


def bundled_models():
    return sorted(DATA_DIR.glob("*.model.toml"))
