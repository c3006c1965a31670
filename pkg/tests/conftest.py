import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import adaptive_mpc  # noqa: F401  (enables float64)
from adaptive_mpc.bench.config import load_model
from adaptive_mpc.dynamics import JointSpec, LinkSpec, make_model

settings.register_profile(
    "repo", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

BUNDLED = ("cartpole", "invdp", "rod", "arm")


@pytest.fixture(scope="session")
def cartpole():
    return load_model("cartpole")


@pytest.fixture(scope="session")
def invdp():
    return load_model("invdp")


@pytest.fixture(scope="session")
def rod():
    return load_model("rod")


@pytest.fixture(scope="session")
def arm():
    return load_model("arm")


@pytest.fixture(scope="session")
def bundled_models():
    return {name: load_model(name) for name in BUNDLED}


def slider(mass=1.0, dt=0.01, gravity=(0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0), stiffness=0.0, damping=0.0):
    """One actuated prismatic link: a double integrator when springs and gravity are off."""
    link = LinkSpec("block", mass, inertia=(0.01, 0.01, 0.01))
    joint = JointSpec("rail", "prismatic", -1, axis=axis, stiffness=stiffness, damping=damping)
    return make_model("slider", [link], [joint], dt=dt, gravity=gravity, actuated=(0,))


def pendulum(length=0.5, mass=1.0, dt=0.01, gravity=(0.0, 0.0, -9.8)):
    """Revolute link about world y; angle 0 puts the COM straight above the pivot."""
    link = LinkSpec(
        "bob", mass, com=(0.0, 0.0, length), inertia=(1e-3, 1e-3, 1e-3),
        extent=((-0.1, -0.1, 0.0), (0.1, 0.1, 2 * length)),
    )
    joint = JointSpec("pivot", "revolute", -1, axis=(0.0, 1.0, 0.0))
    return make_model("pendulum", [link], [joint], dt=dt, gravity=gravity, actuated=(0,))


def random_states(model, n, rng, speed=1.0):
    q = rng.uniform(-np.pi, np.pi, (n, model.n_dof))
    qd = rng.normal(0.0, speed, (n, model.n_dof))
    return np.hstack([q, qd])


# --------------------------------------------------------------------------- acceptance report

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    number = dict(report.user_properties).get("criterion")
    if number is None:
        return
    detail = dict(report.user_properties).get("detail", "")
    # an expected failure reports as skipped; an unexpected pass as passed
    ok = report.passed
    _CRITERIA[number] = ("PASS" if ok else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
