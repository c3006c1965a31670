"""Pure functional interface to the simulator.

Every function takes ``(model, params, ...)`` where ``params`` is either
``None`` (use the model's nominal values), a full physical parameter vector
in :class:`~adaptive_mpc.dynamics.model.ParamLayout` order, or any object with
a ``physical_vector(model)`` method (``SystemParams``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InvalidInputError, ModelInvalidError, RolloutDivergenceError
from ..validation import check_action, check_actions, check_state
from .kernels import kernels_for
from .model import GeneralizedState, Trajectory


def resolve_theta(model, params):
    """Full physical parameter vector for ``params``."""
    if params is None:
        return model.parameter_vector()
    if hasattr(params, "physical_vector"):
        return params.physical_vector(model)
    theta = np.asarray(params, dtype=float)
    if theta.shape != (model.layout.size,):
        raise InvalidInputError(
            f"parameter vector must have {model.layout.size} entries, got {theta.shape}"
        )
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("parameter vector contains non-finite entries")
    return theta


def param_indices(model, params):
    """Flat-vector indices of the free parameters in ``params`` (all if not a SystemParams)."""
    if hasattr(params, "indices"):
        return tuple(params.indices(model))
    return tuple(range(model.layout.size))


@dataclass(frozen=True)
class DynamicsTerms:
    """Terms of ``M qddot + c + g = f_ext``."""

    M: np.ndarray
    c: np.ndarray
    g: np.ndarray
    f_ext: np.ndarray


@dataclass(frozen=True)
class BodyJacobians:
    """Per-link Jacobians stacked on the first axis (shape (L, 3, N) unless noted).

    Attributes
    ----------
    J : linear Jacobian of each COM.
    J_omega : angular Jacobian, world frame.
    J_omega_local : angular Jacobian expressed in the link (parent-joint) frame.
    J_origin : linear Jacobian of the parent-joint origin.
    R : (L, 3, 3) rotation from link frame to world.
    omega : (L, 3) link angular velocity, world frame.
    """

    J: np.ndarray
    J_omega: np.ndarray
    J_omega_local: np.ndarray
    J_origin: np.ndarray
    R: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class StepDerivatives:
    """``A_x`` (2N, 2N), ``B_u`` (2N, A) and ``C_mu`` (2N, P) of one step."""

    A_x: np.ndarray
    B_u: np.ndarray
    C_mu: np.ndarray


def compute_terms(model, params, x, u=None) -> DynamicsTerms:
    x = check_state(model, x)
    u = check_action(model, u)
    theta = resolve_theta(model, params)
    M, c, g, f = kernels_for(model).terms(x, u, theta)
    return DynamicsTerms(np.asarray(M), np.asarray(c), np.asarray(g), np.asarray(f))


def forward_dynamics(model, params, x, u=None) -> np.ndarray:
    """Joint accelerations from a Cholesky solve of the mass matrix."""
    x = check_state(model, x)
    u = check_action(model, u)
    theta = resolve_theta(model, params)
    qdd = np.asarray(kernels_for(model).qddot(x, u, theta))
    if not np.all(np.isfinite(qdd)):
        raise ModelInvalidError("mass matrix is not positive definite for these parameters")
    return qdd


def step(model, params, x, u=None) -> np.ndarray:
    """Semi-implicit Euler: ``qdot' = qdot + dt qddot``, ``q' = q + dt qdot'``."""
    x = check_state(model, x)
    u = check_action(model, u)
    theta = resolve_theta(model, params)
    nx = np.asarray(kernels_for(model).step(x, u, theta))
    if not np.all(np.isfinite(nx)):
        raise ModelInvalidError("step produced non-finite state; parameters may be nonphysical")
    return nx


def step_state(model, params, state: GeneralizedState, u=None) -> GeneralizedState:
    return GeneralizedState.from_vector(step(model, params, state, u))


def rollout(model, params, x0, actions) -> Trajectory:
    """Simulate ``len(actions)`` steps; the trajectory holds ``H + 1`` states."""
    x0 = check_state(model, x0, "x0")
    us = check_actions(model, actions)
    theta = resolve_theta(model, params)
    if us.shape[0] == 0:
        return Trajectory(x0[None].copy(), us, model.dt)
    xs = np.asarray(kernels_for(model).rollout(x0, us, theta))
    bad = ~np.all(np.isfinite(xs), axis=1)
    if bad.any():
        raise RolloutDivergenceError(int(np.argmax(bad)) - 1)
    return Trajectory(xs, us, model.dt)


def body_jacobians(model, params, x) -> BodyJacobians:
    x = check_state(model, x)
    theta = resolve_theta(model, params)
    out = kernels_for(model).body_jacobians(x, theta)
    return BodyJacobians(**{k: np.asarray(v) for k, v in out.items()})


def body_jacobians_batch(model, params, states) -> BodyJacobians:
    """Jacobians at every row of ``states``; each field gains a leading time axis."""
    theta = resolve_theta(model, params)
    states = np.asarray(states, dtype=float)
    out = kernels_for(model).body_jacobians_batch(states, theta)
    return BodyJacobians(**{k: np.asarray(v) for k, v in out.items()})


def com_positions(model, params, q) -> np.ndarray:
    theta = resolve_theta(model, params)
    _, com, _, _, _ = model.layout.split(theta)
    return np.asarray(kernels_for(model).com_positions(np.asarray(q, dtype=float), com))


def step_derivatives(model, params, x, u=None) -> StepDerivatives:
    """Exact derivatives of :func:`step`.

    The parameter columns follow ``params``' free entries when it is a
    ``SystemParams``; otherwise every physical parameter gets a column.
    """
    x = check_state(model, x)
    u = check_action(model, u)
    theta = resolve_theta(model, params)
    idx = param_indices(model, params)
    _, A, B, C = kernels_for(model).derivs(idx)(x, u, theta)
    return StepDerivatives(np.asarray(A), np.asarray(B), np.asarray(C))


def step_derivatives_batch(model, thetas, xs, us, idx=None):
    """Vectorized :func:`step_derivatives` over samples; returns stacked arrays."""
    idx = tuple(range(model.layout.size)) if idx is None else tuple(idx)
    _, A, B, C = kernels_for(model).derivs_batch(idx)(
        np.asarray(xs, dtype=float), np.asarray(us, dtype=float), np.asarray(thetas, dtype=float)
    )
    return np.asarray(A), np.asarray(B), np.asarray(C)
