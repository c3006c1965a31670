"""Parametric-excitation confidence scores.

Each score sums, over the batch, the magnitude of the columns that multiply
the unknown parameter group in the equations of motion. A column that
vanishes means the batch carries no information about that parameter, so the
magnitude works as a cheap stand-in for a rank test.

Time derivatives of observed quantities (joint accelerations, Jacobian and
rotation rates) are taken as forward differences between adjacent samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics.api import body_jacobians_batch, resolve_theta
from ..dynamics.model import Trajectory
from ..exceptions import InvalidInputError
from .params import JointDamping, JointStiffness, LinkComAxis, LinkInertiaAxis, LinkMass


class ObservationBatch(Trajectory):
    """Recent observed states ``x_0..x_H`` and the ``H`` actions between them."""

    def __post_init__(self):
        super().__post_init__()
        if self.horizon < 2:
            raise InvalidInputError(f"observation batch needs H >= 2, got H={self.horizon}")


@dataclass(frozen=True)
class ConfidenceScore:
    raw: float
    normalized: float
    count: int = 1

    def __float__(self):
        return float(self.normalized)


def _as_batch(batch, dt=None):
    if isinstance(batch, Trajectory):
        return batch
    states, actions = batch
    return ObservationBatch(states, actions, 0.01 if dt is None else dt)


def _score(raw, H, count):
    raw = float(raw)
    return ConfidenceScore(raw, raw / (H * max(count, 1)), count)


def _skew_batch(v):
    """Skew matrices for the trailing 3-axis of ``v``."""
    z = np.zeros(v.shape[:-1])
    return np.stack(
        [
            np.stack([z, -v[..., 2], v[..., 1]], -1),
            np.stack([v[..., 2], z, -v[..., 0]], -1),
            np.stack([-v[..., 1], v[..., 0], z], -1),
        ],
        -2,
    )


def scored_entities(model, params, group):
    """Links (or joints) carrying an unknown of ``group``; every link/joint if none."""
    cls = {
        "mass": LinkMass,
        "inertia": LinkInertiaAxis,
        "com": LinkComAxis,
        "stiffness": JointStiffness,
        "damping": JointDamping,
    }[group]
    found = []
    for t in getattr(params, "targets", ()):
        if isinstance(t, cls):
            idx = t.joint if group in ("stiffness", "damping") else t.link
            if idx not in found:
                found.append(idx)
    return sorted(found) if found else list(range(model.n_links))


def confidence_mass(model, params, batch, include_coriolis=False, links=None):
    """Sum over samples and links of ``|(J^T J + J_w^T I~ J_w) qddot - J^T g_e|``.

    ``I~`` is the world-frame inertia divided by the link mass, taken from the
    current estimate ``params``. ``include_coriolis`` adds the velocity-product
    terms ``(J^T Jdot + J_w^T I~ Jdot_w + J_w^T [w] I~ J_w) qdot``.
    """
    batch = _as_batch(batch)
    links = scored_entities(model, params, "mass") if links is None else list(links)
    theta = resolve_theta(model, params)
    masses, _, inertia, _, _ = model.layout.split(theta)
    n, H, dt = model.n_dof, batch.horizon, model.dt
    jac = body_jacobians_batch(model, theta, batch.states)
    qd = batch.states[:, n:]
    dqd = (qd[1:] - qd[:-1]) / dt
    g_e = np.asarray(model.gravity)
    total = 0.0
    for k in links:
        J = jac.J[:, k]
        Jw = jac.J_omega[:, k]
        R = jac.R[:, k]
        I_rel = np.einsum("tij,j,tlj->til", R, inertia[k] / masses[k], R)
        inert = np.einsum("tin,tim->tnm", J, J) + np.einsum("tin,tij,tjm->tnm", Jw, I_rel, Jw)
        col = np.einsum("tnm,tm->tn", inert[:H], dqd) - np.einsum("tin,i->tn", J[:H], g_e)
        if include_coriolis:
            Jd = (J[1:] - J[:-1]) / dt
            Jwd = (Jw[1:] - Jw[:-1]) / dt
            omega = jac.omega[:H, k]
            cor = (
                np.einsum("tin,tim->tnm", J[:H], Jd)
                + np.einsum("tin,tij,tjm->tnm", Jw[:H], I_rel[:H], Jwd)
                + np.einsum("tin,tij,tjl,tlm->tnm", Jw[:H], _skew_batch(omega), I_rel[:H], Jw[:H])
            )
            col = col + np.einsum("tnm,tm->tn", cor, qd[:H])
        total += np.linalg.norm(col, axis=1).sum()
    return _score(total, H, len(links))


def confidence_inertia(model, params, batch, include_coriolis=False, links=None):
    """Sum of ``|J_w^T Diag(J_w qddot)[:, i]|`` over samples, links and principal axes.

    The angular Jacobian is expressed in the link frame, the frame where the
    principal moments are defined.
    """
    batch = _as_batch(batch)
    links = scored_entities(model, params, "inertia") if links is None else list(links)
    n, H, dt = model.n_dof, batch.horizon, model.dt
    jac = body_jacobians_batch(model, params, batch.states)
    qd = batch.states[:, n:]
    dqd = (qd[1:] - qd[:-1]) / dt
    eye = np.eye(3)
    total = 0.0
    for k in links:
        Jl = jac.J_omega_local[:H, k]
        acc = np.einsum("tin,tn->ti", Jl, dqd)
        # column i of J^T Diag(v) is v_i * J^T e_i
        cols = np.einsum("tin,ti->tni", Jl, acc)
        if include_coriolis:
            w = np.einsum("tin,tn->ti", Jl, qd[:H])
            # column i of [w] Diag(w) is w_i (w x e_i)
            wx = np.cross(w[:, None, :], eye[None, :, :])
            cols = cols + np.einsum("tjn,tij,ti->tni", Jl, wx, w)
        total += np.linalg.norm(cols, axis=1).sum()
    return _score(total, H, len(links))


def confidence_com(model, params, batch, links=None):
    """Necessary-condition score for COM identifiability.

    Sums column norms of ``S = R[Jw^ qddot] + Rdot[Jw^ qdot] + R[Jw^dot qdot]``
    and ``G = [R^T (J~ qddot + J~dot qdot - g_e)]`` where ``Jw^`` is the local
    angular Jacobian and ``J~`` the parent-joint linear Jacobian. Quadratic
    terms in the COM offset are dropped.
    """
    batch = _as_batch(batch)
    links = scored_entities(model, params, "com") if links is None else list(links)
    n, H, dt = model.n_dof, batch.horizon, model.dt
    jac = body_jacobians_batch(model, params, batch.states)
    qd = batch.states[:, n:]
    qdd = (qd[1:] - qd[:-1]) / dt
    v = qd[:H]
    g_e = np.asarray(model.gravity)
    total = 0.0
    for k in links:
        R = jac.R[:, k]
        Jl = jac.J_omega_local[:, k]
        Jt = jac.J_origin[:, k]
        Rd = (R[1:] - R[:-1]) / dt
        Jld = (Jl[1:] - Jl[:-1]) / dt
        Jtd = (Jt[1:] - Jt[:-1]) / dt
        R0, Jl0, Jt0 = R[:H], Jl[:H], Jt[:H]
        S = (
            R0 @ _skew_batch(np.einsum("tin,tn->ti", Jl0, qdd))
            + Rd @ _skew_batch(np.einsum("tin,tn->ti", Jl0, v))
            + R0 @ _skew_batch(np.einsum("tin,tn->ti", Jld, v))
        )
        lin = np.einsum("tin,tn->ti", Jt0, qdd) + np.einsum("tin,tn->ti", Jtd, v) - g_e
        G = _skew_batch(np.einsum("tji,tj->ti", R0, lin))
        total += np.linalg.norm(S, axis=1).sum() + np.linalg.norm(G, axis=1).sum()
    return _score(total, H, len(links))


def confidence_stiffness(batch, rest_pose, joints=None):
    """``sum_t |q_t - q_rest|`` over the scored joints, ``t = 0..H-1``."""
    batch = _as_batch(batch)
    H = batch.horizon
    n = batch.states.shape[1] // 2
    joints = list(range(n)) if joints is None else list(joints)
    dev = batch.states[:H, :n][:, joints] - np.asarray(rest_pose, dtype=float)[joints]
    return _score(np.linalg.norm(dev, axis=1).sum(), H, len(joints))


def confidence_damping(batch, joints=None):
    """``sum_t |qdot_t|`` over the scored joints, ``t = 0..H-1``."""
    batch = _as_batch(batch)
    H = batch.horizon
    n = batch.states.shape[1] // 2
    joints = list(range(n)) if joints is None else list(joints)
    vel = batch.states[:H, n:][:, joints]
    return _score(np.linalg.norm(vel, axis=1).sum(), H, len(joints))


GROUPS = ("mass", "inertia", "com", "stiffness", "damping")


def confidence_score(model, params, batch, group=None, include_coriolis=False):
    """Score ``batch`` for the parameter group(s) of ``params``.

    With several groups present the smallest normalized score is returned,
    since every group has to be excited for the fit to be trusted.
    """
    groups = [group] if group is not None else sorted(set(params.groups), key=GROUPS.index)
    scores = []
    for grp in groups:
        if grp == "mass":
            s = confidence_mass(model, params, batch, include_coriolis)
        elif grp == "inertia":
            s = confidence_inertia(model, params, batch, include_coriolis)
        elif grp == "com":
            s = confidence_com(model, params, batch)
        elif grp == "stiffness":
            s = confidence_stiffness(batch, model.rest_pose, scored_entities(model, params, grp))
        elif grp == "damping":
            s = confidence_damping(batch, scored_entities(model, params, grp))
        else:
            raise InvalidInputError(f"unknown parameter group {grp!r}")
        scores.append(s)
    return min(scores, key=lambda s: s.normalized)
