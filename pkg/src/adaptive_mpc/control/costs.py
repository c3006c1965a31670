"""Trajectory objectives for the planner.

Task objectives are quadratic in state error and action. Exploration
objectives reward parametric excitation: for stiffness and damping the reward
is a smooth squared-norm surrogate that folds into the quadratic form, while
mass, inertia and COM rewards are per-step confidence terms whose derivatives
are taken by central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..dynamics.api import step as dyn_step
from ..dynamics.model import Trajectory
from ..exceptions import InvalidInputError
from ..sysid import confidence as conf

TASK = "task"
EXPLORE = "explore"
_QUADRATIC_GROUPS = ("stiffness", "damping")
_SCORED_GROUPS = ("mass", "inertia", "com")


def _psd(mat, name, strict=False):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or not np.all(np.isfinite(mat)):
        raise InvalidInputError(f"{name} must be a finite square matrix")
    if not np.allclose(mat, mat.T, atol=1e-12):
        raise InvalidInputError(f"{name} must be symmetric")
    low = np.linalg.eigvalsh(mat).min() if mat.size else 1.0
    if low < (1e-12 if strict else -1e-10):
        raise InvalidInputError(f"{name} must be positive {'definite' if strict else 'semidefinite'}")
    return mat


@dataclass(frozen=True)
class CostSpec:
    """Planner objective.

    For ``kind="explore"`` the quadratic weights act as a regularizer around
    ``target`` and ``group`` names the parameter group whose excitation is
    rewarded with strength ``explore_weight``. ``center`` is the rest pose for
    the stiffness surrogate. ``model``/``params`` are needed only by the
    mass, inertia and COM groups; ``fd_step`` is their difference step.
    """

    target: np.ndarray
    Q_r: np.ndarray
    Q_f: np.ndarray
    R: np.ndarray
    kind: str = TASK
    group: str | None = None
    explore_weight: float = 1.0
    center: np.ndarray | None = None
    joints: tuple | None = None
    fd_step: float = 1e-5
    model: object = field(default=None, compare=False, repr=False)
    params: object = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        target = np.asarray(self.target, dtype=float).reshape(-1)
        n2 = target.size
        Q_r = _psd(np.atleast_2d(self.Q_r), "Q_r")
        Q_f = _psd(np.atleast_2d(self.Q_f), "Q_f")
        R = _psd(np.atleast_2d(self.R), "R", strict=True)
        if Q_r.shape != (n2, n2) or Q_f.shape != (n2, n2):
            raise InvalidInputError(f"Q_r and Q_f must be {n2}x{n2}")
        if self.kind not in (TASK, EXPLORE):
            raise InvalidInputError(f"kind must be '{TASK}' or '{EXPLORE}'")
        if self.kind == EXPLORE:
            if self.group not in _QUADRATIC_GROUPS + _SCORED_GROUPS:
                raise InvalidInputError(f"unknown explore group {self.group!r}")
            if self.explore_weight < 0:
                raise InvalidInputError("explore_weight must be nonnegative")
            if self.group in _SCORED_GROUPS and (self.model is None or self.params is None):
                raise InvalidInputError(f"explore group {self.group!r} needs model and params")
        center = np.zeros(n2 // 2) if self.center is None else np.asarray(self.center, float)
        if center.shape != (n2 // 2,):
            raise InvalidInputError("center must hold one entry per joint")
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "Q_r", Q_r)
        object.__setattr__(self, "Q_f", Q_f)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "center", center)
        if self.joints is not None:
            object.__setattr__(self, "joints", tuple(int(j) for j in self.joints))

    @property
    def n_state(self):
        return self.target.size

    def explore(self, group, weight=None, model=None, params=None, joints=None, center=None):
        """Exploration variant of this spec, keeping its quadratic weights as regularizer."""
        return replace(
            self,
            kind=EXPLORE,
            group=group,
            explore_weight=self.explore_weight if weight is None else float(weight),
            model=model if model is not None else self.model,
            params=params if params is not None else self.params,
            joints=joints if joints is not None else self.joints,
            center=center if center is not None else self.center,
        )

    def task(self):
        return replace(self, kind=TASK, group=None)


def diagonal_cost(target, q_running, q_final, r_action, **kwargs):
    """CostSpec with diagonal weights given as vectors (or scalars)."""
    target = np.asarray(target, dtype=float)
    n2 = target.size

    def diag(v, size):
        v = np.broadcast_to(np.asarray(v, dtype=float), (size,))
        return np.diag(v)

    r_action = np.atleast_1d(np.asarray(r_action, dtype=float))
    return CostSpec(target, diag(q_running, n2), diag(q_final, n2), np.diag(r_action), **kwargs)


def _split(traj):
    xs = np.asarray(traj.states, dtype=float)
    us = np.asarray(traj.actions, dtype=float)
    return xs, us


def task_cost(traj, cost: CostSpec) -> float:
    """Quadratic state-error and action cost over ``traj``."""
    xs, us = _split(traj)
    err = xs - cost.target
    run = np.einsum("ti,ij,tj->", err[:-1], cost.Q_r, err[:-1])
    fin = err[-1] @ cost.Q_f @ err[-1]
    act = np.einsum("ti,ij,tj->", us, cost.R, us) if us.size else 0.0
    return float(0.5 * (run + fin + act))


def _surrogate_matrix(cost):
    """Diagonal selector over state coordinates rewarded by the quadratic surrogate."""
    n2 = cost.n_state
    n = n2 // 2
    joints = range(n) if cost.joints is None else cost.joints
    sel = np.zeros(n2)
    off = 0 if cost.group == "stiffness" else n
    for j in joints:
        sel[off + j] = 1.0
    return np.diag(sel)


def _surrogate_center(cost):
    n = cost.n_state // 2
    return np.concatenate([cost.center, np.zeros(n)])


def _stage_score(cost, x, u):
    """Excitation gained over one step from ``x`` under ``u``."""
    model, params = cost.model, cost.params
    try:
        nx = dyn_step(model, params, x, u)
    except Exception:
        return np.nan
    traj = Trajectory(np.stack([x, nx]), np.atleast_2d(u), model.dt)
    if cost.group == "mass":
        return conf.confidence_mass(model, params, traj).raw
    if cost.group == "inertia":
        return conf.confidence_inertia(model, params, traj).raw
    return conf.confidence_com(model, params, traj).raw


def explore_cost(traj, cost: CostSpec) -> float:
    """Negative excitation reward of ``traj`` (zero when nothing is excited).

    Stiffness and damping use ``sum_t |q_t - q_rest|^2`` and
    ``sum_t |qdot_t|^2`` over all states; the other groups use the raw
    confidence score of the trajectory.
    """
    if cost.kind != EXPLORE:
        raise InvalidInputError("explore_cost needs an explore CostSpec")
    xs, us = _split(traj)
    if cost.group in _QUADRATIC_GROUPS:
        dev = xs - _surrogate_center(cost)
        sel = np.diag(_surrogate_matrix(cost))
        return -float(np.sum(sel * dev**2))
    model, params = cost.model, cost.params
    t = Trajectory(xs, us, model.dt)
    if cost.group == "mass":
        w = conf.confidence_mass(model, params, t).raw
    elif cost.group == "inertia":
        w = conf.confidence_inertia(model, params, t).raw
    else:
        w = conf.confidence_com(model, params, t).raw
    return -float(w)


def objective(traj, cost: CostSpec) -> float:
    """The scalar the planner minimizes."""
    base = task_cost(traj, cost)
    if cost.kind == TASK:
        return base
    return base + cost.explore_weight * explore_cost(traj, cost)


@dataclass(frozen=True)
class CostDerivatives:
    """Stage derivatives; ``l_x``/``l_xx`` include the final state at index T."""

    l_x: np.ndarray
    l_u: np.ndarray
    l_xx: np.ndarray
    l_uu: np.ndarray
    l_ux: np.ndarray


def cost_derivatives(cost: CostSpec, xs, us) -> CostDerivatives:
    """First and second derivatives of :func:`objective` split by stage."""
    xs = np.asarray(xs, dtype=float)
    us = np.asarray(us, dtype=float)
    T, n2 = us.shape[0], xs.shape[1]
    A = us.shape[1]
    err = xs - cost.target
    l_x = np.empty((T + 1, n2))
    l_x[:T] = err[:T] @ cost.Q_r
    l_x[T] = cost.Q_f @ err[T]
    l_xx = np.empty((T + 1, n2, n2))
    l_xx[:T] = cost.Q_r
    l_xx[T] = cost.Q_f
    l_u = us @ cost.R
    l_uu = np.broadcast_to(cost.R, (T, A, A)).copy()
    l_ux = np.zeros((T, A, n2))
    if cost.kind == TASK:
        return CostDerivatives(l_x, l_u, l_xx, l_uu, l_ux)

    lam = cost.explore_weight
    if cost.group in _QUADRATIC_GROUPS:
        P = -2.0 * lam * _surrogate_matrix(cost)
        dev = xs - _surrogate_center(cost)
        l_x += dev @ P
        l_xx += P
        return CostDerivatives(l_x, l_u, l_xx, l_uu, l_ux)

    # per-step excitation reward; curvature of the reward is not modelled
    h = cost.fd_step
    for t in range(T):
        x, u = xs[t], us[t]
        gx = np.zeros(n2)
        for i in range(n2):
            e = np.zeros(n2)
            e[i] = h
            gx[i] = (_stage_score(cost, x + e, u) - _stage_score(cost, x - e, u)) / (2 * h)
        gu = np.zeros(A)
        for i in range(A):
            e = np.zeros(A)
            e[i] = h
            gu[i] = (_stage_score(cost, x, u + e) - _stage_score(cost, x, u - e)) / (2 * h)
        l_x[t] -= lam * np.nan_to_num(gx)
        l_u[t] -= lam * np.nan_to_num(gu)
    return CostDerivatives(l_x, l_u, l_xx, l_uu, l_ux)
