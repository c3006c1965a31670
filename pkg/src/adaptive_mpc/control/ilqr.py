"""Iterative LQR with warm starting.

Each iteration linearizes the dynamics along the nominal trajectory, runs a
Riccati-style backward pass with Levenberg damping on the action Hessian and
line-searches the feedforward term. Accepted iterates never increase the
objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np
from jax import lax

from ..dynamics.api import resolve_theta
from ..dynamics.kernels import kernels_for
from ..dynamics.model import Trajectory
from ..exceptions import InvalidInputError, OutOfPlanError, RolloutDivergenceError
from ..validation import check_state
from .costs import CostSpec, cost_derivatives, objective


@dataclass(frozen=True)
class IlqrOptions:
    """Solver settings.

    Regularization starts at ``reg_init``; a failed backward pass or line
    search multiplies it by ``reg_up`` (jumping to at least ``reg_min``), an
    accepted step multiplies it by ``reg_down`` (dropping to zero below
    ``reg_min``). Exceeding ``reg_max`` ends the solve unconverged.
    """

    max_iter: int = 10
    tol: float = 1e-6
    reg_init: float = 0.0
    reg_min: float = 1e-6
    reg_max: float = 1e10
    reg_up: float = 10.0
    reg_down: float = 0.5
    alphas: tuple = (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625)
    action_limit: np.ndarray | None = None

    def __post_init__(self):
        if self.max_iter < 0:
            raise InvalidInputError("max_iter must be >= 0")
        if self.tol < 0:
            raise InvalidInputError("tol must be nonnegative")
        if not (self.reg_up > 1 and 0 < self.reg_down < 1):
            raise InvalidInputError("need reg_up > 1 and 0 < reg_down < 1")


@dataclass(frozen=True)
class IlqrSolution:
    """Nominal plan with its time-varying feedback law.

    The accepted feedforward step is already folded into ``actions``; ``k``
    keeps the last backward pass's feedforward for inspection. ``n_iter``
    counts accepted iterations and ``n_passes`` every backward pass run.
    """

    states: np.ndarray
    actions: np.ndarray
    K: np.ndarray
    k: np.ndarray
    cost: float
    n_iter: int
    converged: bool
    cost_history: tuple = field(default=())
    message: str = ""
    n_passes: int = 0

    @property
    def horizon(self):
        return self.actions.shape[0]

    def trajectory(self, dt):
        return Trajectory(self.states, self.actions, dt)


def feedback_action(sol: IlqrSolution, t, x):
    """``u_t + K_t (x - x_t)`` for plan-relative index ``t``."""
    t = int(t)
    if not 0 <= t < sol.horizon:
        raise OutOfPlanError(f"plan index {t} outside horizon {sol.horizon}")
    x = np.asarray(x, dtype=float)
    return sol.actions[t] + sol.K[t] @ (x - sol.states[t])


def _backward(A, B, l_x, l_u, l_xx, l_uu, l_ux, reg):
    n2 = A.shape[1]
    m = B.shape[2]

    def body(carry, inp):
        V_x, V_xx, ok = carry
        At, Bt, lx, lu, lxx, luu, lux = inp
        Q_x = lx + At.T @ V_x
        Q_u = lu + Bt.T @ V_x
        Q_xx = lxx + At.T @ V_xx @ At
        Q_uu = luu + Bt.T @ V_xx @ Bt
        Q_ux = lux + Bt.T @ V_xx @ At
        Q_uu_reg = Q_uu + reg * jnp.eye(m)
        Q_uu_reg = 0.5 * (Q_uu_reg + Q_uu_reg.T)
        L = jnp.linalg.cholesky(Q_uu_reg)
        good = jnp.all(jnp.isfinite(L))
        L = jnp.where(good, L, jnp.eye(m))
        kt = -jax.scipy.linalg.cho_solve((L, True), Q_u)
        Kt = -jax.scipy.linalg.cho_solve((L, True), Q_ux)
        V_x = Q_x + Kt.T @ Q_uu @ kt + Kt.T @ Q_u + Q_ux.T @ kt
        V_xx = Q_xx + Kt.T @ Q_uu @ Kt + Kt.T @ Q_ux + Q_ux.T @ Kt
        V_xx = 0.5 * (V_xx + V_xx.T)
        dv = jnp.stack([kt @ Q_u, 0.5 * kt @ Q_uu @ kt])
        return (V_x, V_xx, ok & good), (Kt, kt, dv)

    init = (l_x[-1], l_xx[-1], jnp.array(True))
    (_, _, ok), (K, k, dv) = lax.scan(
        body, init, (A, B, l_x[:-1], l_u, l_xx[:-1], l_uu, l_ux), reverse=True
    )
    return K, k, dv.sum(axis=0), ok & jnp.all(jnp.isfinite(K)) & jnp.all(jnp.isfinite(k))


_backward_jit = jax.jit(_backward)


def lqr_seed(model, params, cost: CostSpec, T, u_ref=None):
    """Finite-horizon LQR about the cost target as a warm-start seed.

    The dynamics are linearized once at ``(target, u_ref)``; the returned
    plan holds the target as its nominal state, ``u_ref`` as its nominal
    action and the time-varying LQR gains. Passing it as ``warm`` makes a
    cold solve's first rollout closed loop, which keeps unstable plants from
    falling over before the first backward pass.
    """
    T = int(T)
    kern = kernels_for(model)
    theta = resolve_theta(model, params)
    n2, m = cost.n_state, model.n_act
    u_ref = np.zeros(m) if u_ref is None else np.asarray(u_ref, dtype=float).reshape(m)
    x_ref = np.asarray(cost.target, dtype=float)
    A, B = kern.linearize(x_ref[None], u_ref[None], theta)
    A = np.repeat(np.asarray(A), T, axis=0)
    B = np.repeat(np.asarray(B), T, axis=0)
    l_xx = np.repeat(np.asarray(cost.Q_r)[None], T + 1, axis=0)
    l_xx[-1] = cost.Q_f
    K, _, _, ok = _backward_jit(
        A, B, np.zeros((T + 1, n2)), np.zeros((T, m)), l_xx,
        np.repeat(np.asarray(cost.R)[None], T, axis=0), np.zeros((T, m, n2)), 0.0,
    )
    if not bool(ok):
        raise InvalidInputError("LQR seed failed: action Hessian not positive definite")
    return IlqrSolution(
        states=np.repeat(x_ref[None], T + 1, axis=0),
        actions=np.repeat(u_ref[None], T, axis=0),
        K=np.asarray(K),
        k=np.zeros((T, m)),
        cost=float("nan"),
        n_iter=0,
        converged=False,
        message="lqr seed",
    )


def _policy(kern, x0, xs, us, K, k, alpha, theta, limit):
    if limit is None:
        out_xs, out_us = kern.policy_rollout(x0, xs, us, K, k, alpha, theta)
        return np.asarray(out_xs), np.asarray(out_us)
    # clamping needs the executed action inside the loop; do it step by step
    n_steps = us.shape[0]
    out_xs = np.empty_like(xs)
    out_us = np.empty_like(us)
    out_xs[0] = x0
    for t in range(n_steps):
        u = np.clip(us[t] + alpha * k[t] + K[t] @ (out_xs[t] - xs[t]), -limit, limit)
        out_us[t] = u
        out_xs[t + 1] = np.asarray(kern.step(out_xs[t], u, theta))
    return out_xs, out_us


def _warm_init(warm, offset, T, n2, m):
    us = np.zeros((T, m))
    K = np.zeros((T, m, n2))
    xs = np.zeros((T + 1, n2))
    if warm is None:
        return xs, us, K, False
    offset = int(offset)
    if offset < 0:
        raise InvalidInputError("warm-start offset must be nonnegative")
    keep = max(0, min(warm.horizon - offset, T))
    if keep > 0:
        us[:keep] = warm.actions[offset : offset + keep]
        K[:keep] = warm.K[offset : offset + keep]
        xs[: keep + 1] = warm.states[offset : offset + keep + 1]
    # tail states track the last kept nominal so the zero-gain tail stays open loop
    xs[keep + 1 :] = xs[keep]
    return xs, us, K, keep > 0


def _should_stop(stop):
    if stop is None:
        return False
    if hasattr(stop, "is_set"):
        return stop.is_set()
    return bool(stop())


def ilqr_solve(
    model,
    params,
    x0,
    cost: CostSpec,
    T,
    warm: IlqrSolution | None = None,
    offset=0,
    opts: IlqrOptions | None = None,
    initial_actions=None,
    stop=None,
):
    """Optimize a ``T``-step plan from ``x0``.

    ``warm`` seeds the plan with a previous solution shifted by ``offset``
    steps (its obsolete prefix is dropped, the uncovered tail gets zero
    actions and zero gains) and the initial rollout follows its feedback law.
    ``initial_actions`` seeds a cold start instead. ``stop`` (an Event or a
    callable) is checked once per iteration.
    """
    opts = opts or IlqrOptions()
    T = int(T)
    if T < 1:
        raise InvalidInputError("horizon T must be >= 1")
    x0 = check_state(model, x0, "x0")
    if not isinstance(cost, CostSpec) or cost.n_state != x0.size:
        raise InvalidInputError("cost must be a CostSpec sized for the model state")
    kern = kernels_for(model)
    theta = resolve_theta(model, params)
    n2, m = x0.size, model.n_act
    limit = None if opts.action_limit is None else np.broadcast_to(
        np.asarray(opts.action_limit, dtype=float), (m,)
    )

    xs_nom, us_nom, K, warmed = _warm_init(warm, offset, T, n2, m)
    if initial_actions is not None and not warmed:
        us_nom = np.asarray(initial_actions, dtype=float).reshape(T, m).copy()
    zeros_k = np.zeros((T, m))
    xs, us = _policy(kern, x0, xs_nom, us_nom, K, zeros_k, 0.0, theta, limit)
    if not np.all(np.isfinite(xs)):
        K = np.zeros_like(K)
        xs, us = _policy(kern, x0, xs_nom, np.zeros_like(us_nom), K, zeros_k, 0.0, theta, limit)
        if not np.all(np.isfinite(xs)):
            bad = ~np.all(np.isfinite(xs), axis=1)
            raise RolloutDivergenceError(int(np.argmax(bad)) - 1)
    dt = model.dt
    c = objective(Trajectory(xs, us, dt), cost)
    history = [c]
    k = zeros_k
    reg = opts.reg_init
    n_iter = 0
    converged = False
    message = "max_iter"

    n_passes = 0
    for _ in range(opts.max_iter):
        if _should_stop(stop):
            message = "stopped"
            break
        n_passes += 1
        A, B = kern.linearize(xs[:-1], us, theta)
        d = cost_derivatives(cost, xs, us)
        while True:
            K_new, k_new, dv, ok = _backward_jit(A, B, d.l_x, d.l_u, d.l_xx, d.l_uu, d.l_ux, reg)
            if bool(ok):
                break
            reg = max(reg * opts.reg_up, opts.reg_min)
            if reg > opts.reg_max:
                break
        if reg > opts.reg_max:
            message = "regularization ceiling"
            break
        K_new, k_new, dv = np.asarray(K_new), np.asarray(k_new), np.asarray(dv)
        K, k = K_new, k_new
        if -(dv[0] + dv[1]) <= opts.tol:
            converged, message = True, "expected decrease below tol"
            break
        accepted = False
        for alpha in opts.alphas:
            xs_try, us_try = _policy(kern, x0, xs, us, K, k, alpha, theta, limit)
            if not np.all(np.isfinite(xs_try)):
                continue
            c_try = objective(Trajectory(xs_try, us_try, dt), cost)
            if c_try < c:
                accepted = True
                break
        if not accepted:
            reg = max(reg * opts.reg_up, opts.reg_min)
            if reg > opts.reg_max:
                message = "regularization ceiling"
                break
            continue
        n_iter += 1
        c_old, c = c, c_try
        xs, us = xs_try, us_try
        history.append(c)
        reg *= opts.reg_down
        if reg < opts.reg_min:
            reg = 0.0
        if abs(c_old - c) <= opts.tol:
            converged, message = True, "cost change below tol"
            break

    return IlqrSolution(
        states=xs,
        actions=us,
        K=K,
        k=k,
        cost=float(c),
        n_iter=n_iter,
        converged=converged,
        cost_history=tuple(history),
        message=message,
        n_passes=n_passes,
    )
