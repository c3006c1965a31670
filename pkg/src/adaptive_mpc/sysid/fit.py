"""Bounded least-squares fit of unknown parameters to an observed batch.

The residual compares a rollout from the first observed state (driven by the
observed actions) against the remaining observations. Its Jacobian comes from
parameter sensitivities chained through time, and the step is a
Levenberg-Marquardt update in bound-normalized coordinates with an active set
for coordinates pinned at a bound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..dynamics.kernels import kernels_for
from ..exceptions import InvalidInputError, RolloutDivergenceError
from .confidence import _as_batch
from .params import SystemParams


@dataclass(frozen=True)
class FitOptions:
    """Settings for :func:`fit_parameters`.

    ``velocity_weight=None`` weights velocity residuals by the timestep, which
    puts them on the scale of the position residuals they integrate into.
    """

    max_iter: int = 30
    tol: float = 1e-12
    grad_tol: float = 1e-14
    position_weight: float = 1.0
    velocity_weight: float | None = None
    lambda_init: float = 1e-3
    lambda_max: float = 1e10
    max_time: float | None = None

    def __post_init__(self):
        if self.max_iter < 0:
            raise InvalidInputError("max_iter must be >= 0")
        if self.lambda_init <= 0 or self.lambda_max <= self.lambda_init:
            raise InvalidInputError("need 0 < lambda_init < lambda_max")


@dataclass(frozen=True)
class FitResult:
    params: SystemParams
    residual: float
    converged: bool
    n_iter: int
    message: str = ""


def _weights(model, opts):
    n = model.n_dof
    wv = model.dt if opts.velocity_weight is None else opts.velocity_weight
    return np.concatenate([np.full(n, opts.position_weight), np.full(n, wv)])


def fit_parameters(model, batch, params_init: SystemParams, opts: FitOptions | None = None):
    """Fit ``params_init``'s free entries to ``batch``.

    Returns a :class:`FitResult`; ``residual`` is the weighted sum of squared
    state errors at the returned parameters. Raises
    :class:`RolloutDivergenceError` if the rollout at ``params_init`` is
    already non-finite.
    """
    opts = opts or FitOptions()
    batch = _as_batch(batch, model.dt)
    if not isinstance(params_init, SystemParams):
        raise InvalidInputError("params_init must be SystemParams")
    states = np.asarray(batch.states, dtype=float)
    actions = np.asarray(batch.actions, dtype=float)
    if states.shape[1] != 2 * model.n_dof:
        raise InvalidInputError("batch state width does not match the model")

    kern = kernels_for(model)
    idx = params_init.indices(model)
    sens = kern.rollout_sensitivity(idx)
    base = model.parameter_vector()
    w = _weights(model, opts)
    lo, width = params_init.lower, params_init.width
    fixed_width = params_init.upper - params_init.lower <= 0
    target = states[1:]

    def evaluate(z, with_jac):
        theta = base.copy()
        theta[idx] = lo + z * width
        xs, S = sens(states[0], actions, theta)
        xs = np.asarray(xs)
        r = ((xs[1:] - target) * w).reshape(-1)
        if not np.all(np.isfinite(r)):
            return None, None
        if not with_jac:
            return r, None
        Jz = (np.asarray(S)[1:] * w[None, :, None]).reshape(r.size, -1) * width
        Jz[:, fixed_width] = 0.0
        return r, Jz

    z = np.clip(params_init.normalized(), 0.0, 1.0)
    r, J = evaluate(z, True)
    if r is None:
        raise RolloutDivergenceError(-1, "rollout at the initial parameters is non-finite")
    cost = float(r @ r)
    lam = opts.lambda_init
    start = time.perf_counter()
    converged, message, it = False, "max_iter", 0

    while it < opts.max_iter:
        if opts.max_time is not None and time.perf_counter() - start > opts.max_time:
            message = "time budget"
            break
        g = J.T @ r
        H = J.T @ J
        # a coordinate on a bound whose descent direction leaves the box stays put
        free = ~(((z <= 0.0) & (g > 0)) | ((z >= 1.0) & (g < 0)))
        scale = np.diag(H).copy()
        if not np.any(free) or np.max(np.abs(g[free]), initial=0.0) <= opts.grad_tol * max(cost, 1e-300) or cost == 0.0:
            converged, message = True, "gradient"
            break
        floor = 1e-12 * max(scale.max(), 1e-300)
        scale = np.maximum(scale, floor)
        improved = False
        while lam <= opts.lambda_max:
            Hf = H[np.ix_(free, free)] + lam * np.diag(scale[free])
            try:
                step = -np.linalg.solve(Hf, g[free])
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            z_new = z.copy()
            z_new[free] = np.clip(z[free] + step, 0.0, 1.0)
            r_new, _ = evaluate(z_new, False)
            if r_new is not None:
                cost_new = float(r_new @ r_new)
                if cost_new < cost:
                    improved = True
                    break
            lam *= 10.0
        it += 1
        if not improved:
            converged, message = True, "no descent"
            break
        rel = (cost - cost_new) / max(cost, 1e-300)
        z = z_new
        r, J = evaluate(z, True)
        cost = float(r @ r)
        lam = max(lam / 3.0, 1e-12)
        if rel <= opts.tol:
            converged, message = True, "tol"
            break

    values = params_init.clip(lo + z * width)
    values = np.where(fixed_width, params_init.values, values)
    return FitResult(params_init.with_values(values), cost, converged, it, message)
