"""Compiled dynamics kernels for one tree structure.

The tree topology, joint geometry, gravity, timestep and actuation map are
baked in as constants (loops over links unroll at trace time); the physical
parameter vector is a traced argument, so re-evaluating with new parameters
never recompiles.

Derivatives of the discrete step are assembled by hand: forward-mode Jacobians
of the individual equation-of-motion terms ``M, c, g, f`` are chained through
``qddot = M^{-1}(f - c - g)`` as ``M^{-1}(dr - dM qddot)`` and then through the
semi-implicit Euler update.
"""

from __future__ import annotations

import functools

import jax
import jax.numpy as jnp
import numpy as np
from jax import lax
from jax.scipy.linalg import cho_solve

from .model import REVOLUTE, ModelSpec


def _skew_np(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


class Kernels:
    """Jitted functions for ``model``'s structure. Obtain via :func:`kernels_for`."""

    def __init__(self, model: ModelSpec):
        self.n = model.n_dof
        self.n_act = model.n_act
        self.layout = model.layout
        self.dt = model.dt
        self.parents = [j.parent for j in model.joints]
        self.kinds = [j.kind for j in model.joints]
        self.axes = [np.asarray(j.axis) for j in model.joints]
        self.origins = [np.asarray(j.origin) for j in model.joints]
        self.rot0 = [np.asarray(j.rotation) for j in model.joints]
        self.axis_skew = [_skew_np(a) for a in self.axes]
        self.g_e = np.asarray(model.gravity)
        self.B = model.actuation_matrix
        self.rest = np.asarray(model.rest_pose)
        self.ancestors = []
        for k in range(self.n):
            chain, j = [], k
            while j >= 0:
                chain.append(j)
                j = self.parents[j]
            self.ancestors.append(sorted(chain))

        self.poses = jax.jit(self._poses)
        self.jacobians = jax.jit(self._jacobians)
        self.body_jacobians = jax.jit(self._body_jacobians)
        self.body_jacobians_batch = jax.jit(jax.vmap(self._body_jacobians, in_axes=(0, None)))
        self.com_positions = jax.jit(self._com_positions)
        self.terms = jax.jit(self._terms)
        self.qddot = jax.jit(self._qddot)
        self.qddot_batch = jax.jit(jax.vmap(self._qddot, in_axes=(0, 0, None)))
        self.step = jax.jit(self._step)
        self.step_increment = jax.jit(self._step_increment)
        self.rollout = jax.jit(self._rollout)
        self.linearize = jax.jit(jax.vmap(self._derivs_x, in_axes=(0, 0, None)))
        self.policy_rollout = jax.jit(self._policy_rollout)
        self._derivs_cache = {}

    # ------------------------------------------------------------------ kinematics
    def _poses(self, q):
        """World rotation, joint-origin position and joint axis for every link."""
        Rs, ps, axes = [], [], []
        eye = jnp.eye(3)
        for k in range(self.n):
            par = self.parents[k]
            Rp = eye if par < 0 else Rs[par]
            pp = jnp.zeros(3) if par < 0 else ps[par]
            Rj = Rp @ self.rot0[k]
            a = Rj @ self.axes[k]
            base = pp + Rp @ self.origins[k]
            if self.kinds[k] == REVOLUTE:
                S = self.axis_skew[k]
                rot = eye + jnp.sin(q[k]) * S + (1.0 - jnp.cos(q[k])) * (S @ S)
                Rs.append(Rj @ rot)
                ps.append(base)
            else:
                Rs.append(Rj)
                ps.append(base + a * q[k])
            axes.append(a)
        return jnp.stack(Rs), jnp.stack(ps), jnp.stack(axes)

    def _com_positions(self, q, com):
        R, p, _ = self._poses(q)
        return p + jnp.einsum("kij,kj->ki", R, com)

    def _jacobians(self, q, com):
        """Return (J_com, J_omega, J_origin, R) stacked over links, each (L, 3, N)."""
        R, p, axes = self._poses(q)
        zero = jnp.zeros(3)
        J_all, Jw_all, Jt_all = [], [], []
        for k in range(self.n):
            c_k = p[k] + R[k] @ com[k]
            J_cols, Jw_cols, Jt_cols = [], [], []
            anc = set(self.ancestors[k])
            for j in range(self.n):
                if j not in anc:
                    J_cols.append(zero)
                    Jw_cols.append(zero)
                    Jt_cols.append(zero)
                elif self.kinds[j] == REVOLUTE:
                    J_cols.append(jnp.cross(axes[j], c_k - p[j]))
                    Jt_cols.append(jnp.cross(axes[j], p[k] - p[j]))
                    Jw_cols.append(axes[j])
                else:
                    J_cols.append(axes[j])
                    Jt_cols.append(axes[j])
                    Jw_cols.append(zero)
            J_all.append(jnp.stack(J_cols, axis=1))
            Jw_all.append(jnp.stack(Jw_cols, axis=1))
            Jt_all.append(jnp.stack(Jt_cols, axis=1))
        return jnp.stack(J_all), jnp.stack(Jw_all), jnp.stack(Jt_all), R

    def _body_jacobians(self, x, theta):
        q, qd = x[: self.n], x[self.n :]
        _, com, _, _, _ = self.layout.split(theta)
        J, Jw, Jt, R = self._jacobians(q, com)
        Jw_local = jnp.einsum("kji,kjn->kin", R, Jw)
        omega = jnp.einsum("kin,n->ki", Jw, qd)
        return {"J": J, "J_omega": Jw, "J_omega_local": Jw_local, "J_origin": Jt, "R": R, "omega": omega}

    # ------------------------------------------------------------------ dynamics
    def _terms(self, x, u, theta):
        n = self.n
        q, qd = x[:n], x[n:]
        m, com, d, ks, kd = self.layout.split(theta)

        def jac_fn(qq):
            J, Jw, _, R = self._jacobians(qq, com)
            return J, Jw, R

        (J, Jw, R), (Jd, Jwd, _) = jax.jvp(jac_fn, (q,), (qd,))
        Iw = jnp.einsum("kij,kj,klj->kil", R, d, R)
        M = jnp.einsum("k,kin,kim->nm", m, J, J) + jnp.einsum("kin,kij,kjm->nm", Jw, Iw, Jw)
        omega = jnp.einsum("kin,n->ki", Jw, qd)
        lin_bias = jnp.einsum("kin,n->ki", Jd, qd)
        ang_acc_bias = jnp.einsum("kin,n->ki", Jwd, qd)
        I_omega = jnp.einsum("kij,kj->ki", Iw, omega)
        ang_bias = jnp.einsum("kij,kj->ki", Iw, ang_acc_bias) + jnp.cross(omega, I_omega)
        c = jnp.einsum("k,kin,ki->n", m, J, lin_bias) + jnp.einsum("kin,ki->n", Jw, ang_bias)
        g = -jnp.einsum("k,kin,i->n", m, J, self.g_e)
        f = self.B @ u - ks * (q - self.rest) - kd * qd
        M = 0.5 * (M + M.T)
        return M, c, g, f

    def _qddot(self, x, u, theta):
        M, c, g, f = self._terms(x, u, theta)
        return cho_solve((jnp.linalg.cholesky(M), True), f - c - g)

    def _step_increment(self, x, u, theta):
        n = self.n
        qdd = self._qddot(x, u, theta)
        dv = self.dt * qdd
        return jnp.concatenate([self.dt * (x[n:] + dv), dv])

    def _step(self, x, u, theta):
        return x + self._step_increment(x, u, theta)

    def _rollout(self, x0, us, theta):
        def body(x, u):
            nx = self._step(x, u, theta)
            return nx, nx

        _, xs = lax.scan(body, x0, us)
        return jnp.concatenate([x0[None], xs], axis=0)

    # ------------------------------------------------------------------ derivatives
    def _chain(self, x, u, theta, idx):
        """Step value and (A_x, B_u, C_theta[idx]) via the analytic chain rule."""
        n, dt = self.n, self.dt
        idx = list(idx)
        z0 = jnp.concatenate([x, theta[jnp.array(idx, dtype=int)] if idx else jnp.zeros(0)])

        def fn(z):
            xx = z[: 2 * n]
            th = theta.at[jnp.array(idx, dtype=int)].set(z[2 * n :]) if idx else theta
            out = self._terms(xx, u, th)
            return out, out

        (dM, dc, dg, df), (M, c, g, f) = jax.jacfwd(fn, has_aux=True)(z0)
        chol = jnp.linalg.cholesky(M)
        qdd = cho_solve((chol, True), f - c - g)
        dr = df - dc - dg - jnp.einsum("ija,j->ia", dM, qdd)
        dqdd = cho_solve((chol, True), dr)
        dqdd_u = cho_solve((chol, True), jnp.asarray(self.B))

        eye = jnp.eye(n)
        zeros = jnp.zeros((n, n))
        dv_dx = jnp.concatenate([zeros, eye], axis=1) + dt * dqdd[:, : 2 * n]
        dq_dx = jnp.concatenate([eye, zeros], axis=1) + dt * dv_dx
        A = jnp.concatenate([dq_dx, dv_dx], axis=0)
        Bu = jnp.concatenate([dt * dt * dqdd_u, dt * dqdd_u], axis=0)
        C = jnp.concatenate([dt * dt * dqdd[:, 2 * n :], dt * dqdd[:, 2 * n :]], axis=0)
        dv = dt * qdd
        x_next = x + jnp.concatenate([dt * (x[n:] + dv), dv])
        return x_next, A, Bu, C

    def _derivs_x(self, x, u, theta):
        _, A, Bu, _ = self._chain(x, u, theta, ())
        return A, Bu

    def derivs(self, idx):
        """Jitted ``(x, u, theta) -> (x_next, A, B, C)`` for parameter indices ``idx``."""
        idx = tuple(int(i) for i in idx)
        fn = self._derivs_cache.get(("single", idx))
        if fn is None:
            fn = jax.jit(functools.partial(self._chain, idx=idx))
            self._derivs_cache[("single", idx)] = fn
        return fn

    def derivs_batch(self, idx):
        idx = tuple(int(i) for i in idx)
        fn = self._derivs_cache.get(("batch", idx))
        if fn is None:
            fn = jax.jit(jax.vmap(functools.partial(self._chain, idx=idx), in_axes=(0, 0, 0)))
            self._derivs_cache[("batch", idx)] = fn
        return fn

    def rollout_sensitivity(self, idx):
        """Jitted ``(x0, us, theta) -> (xs, S)`` with ``S[t] = d x_t / d theta[idx]``.

        The parameter Jacobian of each step is chained through time,
        ``S_{t+1} = A_t S_t + C_t`` with ``S_0 = 0``.
        """
        idx = tuple(int(i) for i in idx)
        fn = self._derivs_cache.get(("sens", idx))
        if fn is None:
            P = len(idx)

            def run(x0, us, theta):
                def body(carry, u):
                    x, S = carry
                    nx, A, _, C = self._chain(x, u, theta, idx)
                    nS = A @ S + C
                    return (nx, nS), (nx, nS)

                S0 = jnp.zeros((2 * self.n, P))
                _, (xs, Ss) = lax.scan(body, (x0, S0), us)
                return (
                    jnp.concatenate([x0[None], xs], axis=0),
                    jnp.concatenate([S0[None], Ss], axis=0),
                )

            fn = jax.jit(run)
            self._derivs_cache[("sens", idx)] = fn
        return fn

    # ------------------------------------------------------------------ control helpers
    def _policy_rollout(self, x0, xs_nom, us_nom, K, k, alpha, theta):
        """Closed-loop rollout ``u_t = u_nom + alpha k_t + K_t (x_t - x_nom_t)``."""

        def body(x, inp):
            xn, un, Kt, kt = inp
            u = un + alpha * kt + Kt @ (x - xn)
            nx = self._step(x, u, theta)
            return nx, (nx, u)

        _, (xs, us) = lax.scan(body, x0, (xs_nom[:-1], us_nom, K, k))
        return jnp.concatenate([x0[None], xs], axis=0), us


_CACHE: dict = {}


def kernels_for(model: ModelSpec) -> Kernels:
    """Kernels are shared between models with the same structure."""
    key = model.structure_key()
    kern = _CACHE.get(key)
    if kern is None:
        kern = _CACHE[key] = Kernels(model)
    return kern
