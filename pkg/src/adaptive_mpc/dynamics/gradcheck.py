"""Randomized comparison of analytic step derivatives against central differences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .api import step_derivatives_batch
from .finite_diff import fd_step_derivatives
from .model import PRISMATIC


@dataclass(frozen=True)
class GradcheckReport:
    """Worst relative error per block over all samples.

    Entries whose finite-difference magnitude is below ``floor`` times the
    block's largest entry (or below ``floor`` outright) are left out, since
    their relative error is dominated by differencing round-off.
    """

    model: str
    n_samples: int
    rel_tol: float
    max_rel_error: dict
    worst_sample: dict
    failures: int

    @property
    def ok(self):
        return self.failures == 0


def sample_inputs(model, n, rng):
    """Random states, actions and physical parameter vectors around the nominal model."""
    N = model.n_dof
    prismatic = np.array([j.kind == PRISMATIC for j in model.joints])
    q = np.where(prismatic, rng.uniform(-0.5, 0.5, (n, N)), rng.uniform(-np.pi, np.pi, (n, N)))
    qd = rng.normal(0.0, 1.0, (n, N))
    us = rng.normal(0.0, 1.0, (n, model.n_act))
    lay = model.layout
    base = model.parameter_vector()
    thetas = np.tile(base, (n, 1))
    L = model.n_dof
    positive = np.r_[0:L, 4 * L : 7 * L]
    thetas[:, positive] *= rng.uniform(0.5, 1.5, (n, positive.size))
    com = np.r_[L : 4 * L]
    thetas[:, com] += rng.uniform(-0.02, 0.02, (n, com.size))
    joint = np.r_[lay.stiffness(0) : lay.size]
    thetas[:, joint] = np.abs(thetas[:, joint] * rng.uniform(0.5, 1.5, (n, joint.size))) + rng.uniform(
        0.0, 0.5, (n, joint.size)
    )
    return np.hstack([q, qd]), us, thetas


def _block_error(analytic, numeric, floor):
    a, f = np.asarray(analytic), np.asarray(numeric)
    cut = floor * max(1.0, float(np.abs(f).max(initial=0.0)))
    mask = np.abs(f) > cut
    if not mask.any():
        return float(np.abs(a - f).max(initial=0.0))
    return float((np.abs(a[mask] - f[mask]) / np.abs(f[mask])).max())


def gradcheck(model, n_samples=1000, rel_tol=1e-4, seed=0, floor=1e-6, rel_step=1e-5):
    """Compare :func:`step_derivatives` with :func:`fd_step_derivatives` at random inputs."""
    rng = np.random.default_rng(seed)
    xs, us, thetas = sample_inputs(model, int(n_samples), rng)
    A, B, C = step_derivatives_batch(model, thetas, xs, us)
    worst = {"A_x": 0.0, "B_u": 0.0, "C_mu": 0.0}
    where = {k: -1 for k in worst}
    failures = 0
    for i in range(len(xs)):
        fd = fd_step_derivatives(model, thetas[i], xs[i], us[i], rel_step=rel_step)
        bad = False
        for name, ana, num in (("A_x", A[i], fd.A_x), ("B_u", B[i], fd.B_u), ("C_mu", C[i], fd.C_mu)):
            err = _block_error(ana, num, floor)
            if err > worst[name]:
                worst[name], where[name] = err, i
            bad |= not err <= rel_tol
        failures += bad
    return GradcheckReport(model.name, len(xs), rel_tol, worst, where, failures)
