"""Central finite differences of the discrete step.

This is the test oracle for :func:`~adaptive_mpc.dynamics.api.step_derivatives`
and deliberately shares nothing with the analytic chain rule: it only calls the
forward step. Differencing the step *increment* ``step(x) - x`` (computed
without forming ``x + ...``) keeps round-off proportional to the increment
instead of the state.
"""

import numpy as np

from .api import StepDerivatives, param_indices, resolve_theta
from .kernels import kernels_for


def _steps(z, scale, rel):
    return rel * np.maximum(1.0, np.abs(z)) * scale


def fd_step_derivatives(model, params, x, u=None, rel_step=1e-6):
    """Finite-difference :class:`StepDerivatives` with the same layout as the analytic one."""
    kern = kernels_for(model)
    x = np.asarray(x, dtype=float)
    u = np.zeros(model.n_act) if u is None else np.atleast_1d(np.asarray(u, dtype=float))
    theta = resolve_theta(model, params)
    idx = param_indices(model, params)
    inc = lambda xx, uu, th: np.asarray(kern.step_increment(xx, uu, th))
    n2 = x.size

    A = np.zeros((n2, n2))
    for i, h in enumerate(_steps(x, 1.0, rel_step)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        A[:, i] = (inc(xp, u, theta) - inc(xm, u, theta)) / (2 * h)
    A += np.eye(n2)

    B = np.zeros((n2, u.size))
    for i, h in enumerate(_steps(u, 1.0, rel_step)):
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        B[:, i] = (inc(x, up, theta) - inc(x, um, theta)) / (2 * h)

    C = np.zeros((n2, len(idx)))
    for col, i in enumerate(idx):
        h = rel_step * max(1.0, abs(theta[i]))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        C[:, col] = (inc(x, u, tp) - inc(x, u, tm)) / (2 * h)
    return StepDerivatives(A, B, C)


def fd_jacobian(fn, z, rel_step=1e-6):
    """Central-difference Jacobian of a vector function ``fn`` at ``z``."""
    z = np.asarray(z, dtype=float)
    f0 = np.asarray(fn(z))
    out = np.zeros(f0.shape + z.shape)
    for i in range(z.size):
        h = rel_step * max(1.0, abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        out[..., i] = (np.asarray(fn(zp)) - np.asarray(fn(zm))) / (2 * h)
    return out


def compare(analytic, numeric, rel_tol=1e-4, floor=1e-8):
    """Max element-wise relative error over entries with ``|numeric| > floor``.

    Returns ``(max_rel_err, ok)``.
    """
    a = np.asarray(analytic)
    f = np.asarray(numeric)
    mask = np.abs(f) > floor
    if not mask.any():
        return 0.0, bool(np.all(np.abs(a) <= 10 * floor))
    rel = np.abs(a[mask] - f[mask]) / np.abs(f[mask])
    worst = float(rel.max())
    return worst, worst <= rel_tol
