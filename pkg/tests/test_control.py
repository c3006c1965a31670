import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptive_mpc.bench.config import load_scenario
from adaptive_mpc.control import (
    CostSpec,
    ILQRController,
    IlqrOptions,
    diagonal_cost,
    explore_cost,
    feedback_action,
    ilqr_solve,
    lqr_seed,
    objective,
    task_cost,
)
from adaptive_mpc.dynamics import Trajectory, rollout
from adaptive_mpc.exceptions import InvalidInputError, OutOfPlanError
from adaptive_mpc.sysid import confidence_stiffness

from .conftest import slider


def riccati(A, B, Q, Qf, R, T):
    """Backward recursion for time-varying LQR on a linear plant."""
    P = Qf
    Ks = []
    for _ in range(T):
        K = -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A + B @ K)
        P = 0.5 * (P + P.T)
        Ks.append(K)
    return P, Ks[::-1]


def slider_lqr_problem(dt=0.01, mass=1.0):
    model = slider(mass=mass, dt=dt)
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[dt * dt / mass], [dt / mass]])
    cost = diagonal_cost([0.0, 0.0], [1.0, 0.1], [10.0, 1.0], [0.01])
    return model, A, B, cost


# --------------------------------------------------------------------------- costs


def test_task_cost_zero_at_target():
    cost = diagonal_cost([1.0, 0.0], 1.0, 5.0, 0.1)
    traj = Trajectory(np.tile([1.0, 0.0], (6, 1)), np.zeros((5, 1)), 0.01)
    assert task_cost(traj, cost) == 0.0


def test_task_cost_matches_direct_sum():
    rng = np.random.default_rng(3)
    cost = CostSpec(rng.normal(size=4), np.diag([1.0, 2.0, 0.1, 0.3]), 7 * np.eye(4), np.array([[0.5]]))
    xs, us = rng.normal(size=(11, 4)), rng.normal(size=(10, 1))
    total = 0.0
    for t in range(10):
        e = xs[t] - cost.target
        total += 0.5 * (e @ cost.Q_r @ e + us[t] @ cost.R @ us[t])
    e = xs[10] - cost.target
    total += 0.5 * e @ cost.Q_f @ e
    assert task_cost(Trajectory(xs, us, 0.01), cost) == pytest.approx(total, rel=1e-13)


def test_cost_spec_validation():
    with pytest.raises(InvalidInputError):
        diagonal_cost([0.0, 0.0], 1.0, 1.0, 0.0)  # singular action weight
    with pytest.raises(InvalidInputError):
        diagonal_cost([0.0, 0.0], -1.0, 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        CostSpec(np.zeros(2), np.eye(3), np.eye(2), np.eye(1))
    with pytest.raises(InvalidInputError):
        diagonal_cost([0.0, 0.0], 1.0, 1.0, 1.0).explore("friction")


def test_explore_surrogates():
    base = diagonal_cost([0.0, 0.0], 1.0, 1.0, 1.0)
    still = Trajectory(np.zeros((5, 2)), np.zeros((4, 1)), 0.01)
    for group in ("stiffness", "damping"):
        assert explore_cost(still, base.explore(group)) == 0.0
    moving = Trajectory(np.tile([0.2, 1.0], (5, 1)), np.zeros((4, 1)), 0.01)
    faster = Trajectory(np.tile([0.2, 2.0], (5, 1)), np.zeros((4, 1)), 0.01)
    damping = base.explore("damping")
    assert explore_cost(faster, damping) == pytest.approx(4 * explore_cost(moving, damping))
    assert explore_cost(moving, damping) < 0
    with pytest.raises(InvalidInputError):
        explore_cost(moving, base)


def test_explore_objective_adds_weighted_reward():
    base = diagonal_cost([0.0, 0.0], 1.0, 1.0, 1.0)
    cost = base.explore("stiffness", weight=3.0)
    traj = Trajectory(np.tile([0.5, 0.0], (4, 1)), np.zeros((3, 1)), 0.01)
    assert objective(traj, cost) == pytest.approx(task_cost(traj, base) + 3.0 * explore_cost(traj, cost))


def test_rod_explore_plan_excites_springs():
    sc = load_scenario("rod")
    x0 = sc.initial_state
    opts = IlqrOptions(max_iter=15)
    joints = (1, 2, 3)
    task = ilqr_solve(sc.model, sc.params, x0, sc.cost, 100, opts=opts)
    explore = sc.cost.explore(
        "stiffness", sc.explore_weight, joints=joints, center=np.asarray(sc.model.rest_pose)
    )
    expl = ilqr_solve(sc.model, sc.params, x0, explore, 100, opts=opts)

    def score(sol):
        return confidence_stiffness(Trajectory(sol.states, sol.actions, sc.model.dt), sc.model.rest_pose, joints).raw

    assert score(expl) > score(task)


# --------------------------------------------------------------------------- iLQR on a linear plant


@pytest.mark.parametrize("T", [5, 50, 200])
def test_matches_riccati_on_linear_plant(T):
    model, A, B, cost = slider_lqr_problem()
    x0 = np.array([1.0, -0.5])
    sol = ilqr_solve(model, None, x0, cost, T, opts=IlqrOptions(max_iter=10, tol=1e-14))
    P0, Ks = riccati(A, B, cost.Q_r, cost.Q_f, cost.R, T)
    assert sol.n_iter == 1
    np.testing.assert_allclose(sol.K, np.array(Ks), rtol=1e-8, atol=1e-10)
    assert sol.cost == pytest.approx(0.5 * x0 @ P0 @ x0, rel=1e-8)
    # the closed-loop LQR trajectory
    x = x0.copy()
    for t in range(T):
        np.testing.assert_allclose(sol.states[t], x, rtol=1e-8, atol=1e-10)
        x = A @ x + B @ (Ks[t] @ x)


def test_zero_cost_gives_zero_actions():
    model = slider()
    cost = diagonal_cost([0.0, 0.0], 0.0, 0.0, 1.0)
    sol = ilqr_solve(model, None, np.array([0.3, 0.1]), cost, 20)
    np.testing.assert_allclose(sol.actions, 0.0, atol=1e-14)


def test_at_target_stays_put():
    model, _, _, cost = slider_lqr_problem()
    sol = ilqr_solve(model, None, np.zeros(2), cost, 30)
    np.testing.assert_array_equal(sol.actions, 0.0)
    np.testing.assert_array_equal(sol.states, 0.0)


@pytest.fixture(scope="module")
def swing_up():
    sc = load_scenario("cartpole")
    params = sc.params.with_values(sc.true_values)
    sol = ilqr_solve(sc.model, params, sc.initial_state, sc.cost, 100, opts=IlqrOptions(max_iter=60))
    return sc, params, sol


def test_cartpole_swing_up_cost_drops_tenfold(swing_up):
    _, _, sol = swing_up
    assert sol.cost_history[-1] * 10 <= sol.cost_history[0]


def test_cost_history_non_increasing(swing_up):
    _, _, sol = swing_up
    assert all(b <= a for a, b in zip(sol.cost_history, sol.cost_history[1:]))
    assert sol.cost == sol.cost_history[-1]


def test_warm_start_from_converged_plan_is_quick(swing_up):
    sc, params, sol = swing_up
    again = ilqr_solve(sc.model, params, sc.initial_state, sc.cost, 100, warm=sol, opts=IlqrOptions(max_iter=60))
    assert again.n_iter <= 2
    assert again.cost <= sol.cost + 1e-9


def test_shifted_warm_start(swing_up):
    sc, params, sol = swing_up
    shift = 10
    x_start = sol.states[shift]
    warm = ilqr_solve(sc.model, params, x_start, sc.cost, 100, warm=sol, offset=shift, opts=IlqrOptions(max_iter=0))
    # with no iterations the rollout replays the shifted plan
    np.testing.assert_allclose(warm.actions[:50], sol.actions[shift : shift + 50], atol=1e-10)


def test_gains_ignore_constant_cost_offset():
    model, _, _, cost = slider_lqr_problem()
    x0 = np.array([0.4, 0.2])
    # a cost sharing Q/R with a different target differs from the original by
    # affine terms only; a constant offset leaves the gains untouched
    a = ilqr_solve(model, None, x0, cost, 40)
    b = ilqr_solve(model, None, x0 + np.array([2.0, 0.0]), CostSpec(cost.target + [2.0, 0.0], cost.Q_r, cost.Q_f, cost.R), 40)
    np.testing.assert_allclose(a.K, b.K, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(a.actions, b.actions, rtol=1e-8, atol=1e-10)


def test_feedback_action_law(swing_up):
    _, _, sol = swing_up
    assert np.array_equal(feedback_action(sol, 3, sol.states[3]), sol.actions[3])
    dx = np.array([0.01, -0.02, 0.0, 0.03])
    np.testing.assert_allclose(feedback_action(sol, 3, sol.states[3] + dx), sol.actions[3] + sol.K[3] @ dx)
    with pytest.raises(OutOfPlanError):
        feedback_action(sol, sol.horizon, sol.states[-1])


def test_feedback_beats_open_loop_under_perturbation(swing_up):
    sc, params, sol = swing_up
    x0 = sc.initial_state + np.array([0.0, 0.05, 0.0, 0.0])
    open_loop = rollout(sc.model, params, x0, sol.actions)
    x = x0.copy()
    states, actions = [x], []
    from adaptive_mpc.dynamics import step

    for t in range(sol.horizon):
        u = feedback_action(sol, t, x)
        x = step(sc.model, params, x, u)
        states.append(x)
        actions.append(u)
    closed = Trajectory(np.array(states), np.array(actions), sc.model.dt)
    assert task_cost(closed, sc.cost) < task_cost(open_loop, sc.cost)


def test_lqr_seed_holds_target():
    model, A, B, cost = slider_lqr_problem()
    seed = lqr_seed(model, None, cost, 25)
    _, Ks = riccati(A, B, cost.Q_r, cost.Q_f, cost.R, 25)
    np.testing.assert_allclose(seed.K, np.array(Ks), rtol=1e-8, atol=1e-10)
    np.testing.assert_array_equal(seed.actions, 0.0)


def test_action_limit_clamps():
    model, _, _, cost = slider_lqr_problem()
    sol = ilqr_solve(model, None, np.array([5.0, 0.0]), cost, 30, opts=IlqrOptions(action_limit=0.5))
    assert np.abs(sol.actions).max() <= 0.5


def test_solver_argument_checks():
    model, _, _, cost = slider_lqr_problem()
    with pytest.raises(InvalidInputError):
        ilqr_solve(model, None, np.zeros(2), cost, 0)
    with pytest.raises(InvalidInputError):
        ilqr_solve(model, None, np.zeros(3), cost, 5)
    with pytest.raises(InvalidInputError):
        IlqrOptions(max_iter=-1)


@given(x0=st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_linear_plant_cost_is_quadratic_form(x0):
    model, A, B, cost = slider_lqr_problem()
    x0 = np.array(x0)
    sol = ilqr_solve(model, None, x0, cost, 20, opts=IlqrOptions(tol=1e-14))
    P0, _ = riccati(A, B, cost.Q_r, cost.Q_f, cost.R, 20)
    assert sol.cost == pytest.approx(0.5 * x0 @ P0 @ x0, rel=1e-8, abs=1e-14)


# --------------------------------------------------------------------------- estimator wrapper


def test_controller_estimator():
    model, _, _, cost = slider_lqr_problem()
    ctl = ILQRController(model, None, cost, T=20, warm_start=True)
    ctl.fit([1.0, 0.0])
    assert ctl.actions_.shape == (20, 1)
    first = ctl.n_iter_
    ctl.fit([1.0, 0.0])
    assert ctl.n_iter_ <= first
    u = ctl.predict(ctl.states_[:20])
    np.testing.assert_allclose(u, ctl.actions_)
    assert ctl.get_params()["T"] == 20
