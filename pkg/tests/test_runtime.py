import numpy as np
import pytest

from adaptive_mpc.bench import load_scenario, run_method
from adaptive_mpc.control import diagonal_cost, ilqr_solve
from adaptive_mpc.exceptions import InvalidInputError
from adaptive_mpc.runtime import (
    HistoryBuffer,
    PlanBuffer,
    PlanEntry,
    SchedulerConfig,
    consume_action,
    plan_cycle,
    profile_planner,
    read_runlog,
)

from .conftest import slider


def short_plan(T=5, x0=(0.5, 0.0)):
    model = slider()
    cost = diagonal_cost([0.0, 0.0], 1.0, 10.0, 0.01)
    return model, cost, ilqr_solve(model, None, np.array(x0), cost, T)


# --------------------------------------------------------------------------- buffers


def test_history_batches():
    hist = HistoryBuffer(8, 0.01)
    for t in range(4):
        hist.push_state(t, [t, 0.0])
        if t < 3:
            assert hist.recent_batch(3) is None
        hist.record_action(t, [0.1 * t])
    hist.push_state(4, [4.0, 0.0])
    batch = hist.recent_batch(3)
    np.testing.assert_array_equal(batch.states[:, 0], [1, 2, 3, 4])
    np.testing.assert_allclose(batch.actions[:, 0], [0.1, 0.2, 0.3])


def test_history_order_and_capacity():
    hist = HistoryBuffer(3, 0.01)
    hist.push_state(0, [0.0])
    with pytest.raises(InvalidInputError):
        hist.push_state(0, [0.0])
    with pytest.raises(InvalidInputError):
        hist.record_action(1, [0.0])
    for t in range(1, 6):
        hist.record_action(t - 1, [0.0])
        hist.push_state(t, [float(t)])
    assert len(hist) == 3
    with pytest.raises(InvalidInputError):
        HistoryBuffer(2, 0.01)


def test_history_gap_gives_no_batch():
    hist = HistoryBuffer(6, 0.01)
    for t in (0, 1, 3):
        hist.push_state(t, [0.0])
        hist.record_action(t, [0.0])
    hist.push_state(4, [0.0])
    assert hist.recent_batch(3) is None


def test_plan_buffer_swap():
    _, _, sol = short_plan()
    buf = PlanBuffer()
    first, second = PlanEntry(0, sol, 0), PlanEntry(3, sol, 1)
    buf.install(first)
    buf.stage(second)
    assert buf.lookup(2) is first
    assert buf.lookup(3) is second
    assert buf.latest() is second
    assert not buf.advance(2)
    assert buf.advance(3)
    assert buf.active is second and buf.staged is None
    assert buf.lookup(8) is None


def test_consume_action_fallbacks():
    model, _, sol = short_plan()
    buf = PlanBuffer()
    u, starved = consume_action(buf, 0, np.zeros(2), 1)
    assert starved and np.array_equal(u, [0.0])
    buf.install(PlanEntry(0, sol))
    u, starved = consume_action(buf, 2, sol.states[2], 1)
    assert not starved and np.array_equal(u, sol.actions[2])
    x = np.array([0.1, 0.0])
    u, starved = consume_action(buf, 9, x, 1)
    assert starved
    np.testing.assert_allclose(u, sol.actions[-1] + sol.K[-1] @ (x - sol.states[-1]))


# --------------------------------------------------------------------------- scheduling


def test_fig2_timeline():
    log, _ = run_method(load_scenario("fig2"), 0)
    swaps = [e.step for e in log.events_of("plan_swap")]
    updates = [e.step for e in log.events_of("model_update")]
    assert swaps[:2] == [4, 9]
    assert updates[0] == 10
    assert not log.events_of("starvation")


def test_adaptive_start_is_at_least_one_step_ahead():
    model, cost, sol = short_plan(T=10)
    buf = PlanBuffer()
    buf.install(PlanEntry(0, sol))
    cfg = SchedulerConfig(t_e=1e-7, H=5, T=10, eps1=0.02, eps2=0.5, max_iter=3)
    job = plan_cycle(model, None, sol.states[2], 2, buf, cost, cfg, n_prev=3)
    assert job.entry.start == 3
    slow = SchedulerConfig(t_e=0.01, H=5, T=10, eps1=0.02, eps2=0.5, max_iter=3)
    job = plan_cycle(model, None, sol.states[2], 2, buf, cost, slow, n_prev=3)
    assert job.entry.start == 5
    assert job.ready <= job.entry.start


def test_fixed_start_starves_when_solves_run_long():
    sc = load_scenario("fig2")
    log, m = run_method(sc, 0, start="fixed", fixed_offset=2, duration_scale=(3.0,))
    assert m.starvation_events > 0
    assert all(e.detail == "terminal-gain hold" for e in log.events_of("starvation"))


def test_scheduler_config_checks():
    with pytest.raises(InvalidInputError):
        SchedulerConfig(t_e=0.0, H=5, T=10, eps1=0.02, eps2=0.5)
    with pytest.raises(InvalidInputError):
        SchedulerConfig(t_e=0.01, H=5, T=10, eps1=0.02, eps2=0.5, start="fixed")
    with pytest.raises(InvalidInputError):
        SchedulerConfig(t_e=0.01, H=5, T=10, eps1=0.02, eps2=0.5, mode="realtime")


def test_profile_planner():
    model, cost, _ = short_plan()
    x0 = np.array([0.5, 0.0])
    assert profile_planner(model, None, x0, cost, 10, mode="virtual", t_e=0.0123) == 0.0123
    with pytest.raises(InvalidInputError):
        profile_planner(model, None, x0, cost, 10, mode="virtual")
    short = profile_planner(model, None, x0, cost, 10, trials=5)
    long = profile_planner(model, None, x0, cost, 400, trials=5)
    assert 0.0 < short < long


@pytest.fixture(scope="module")
def cartpole_run():
    sc = load_scenario("cartpole")
    return sc, run_method(sc, 0, max_steps=150)


def test_virtual_run_plans_stay_mostly_fresh(cartpole_run):
    _, (log, m) = cartpole_run
    assert len(log) == 150
    assert m.stale_fraction < 1.0
    assert log.meta["cycles"] > 0
    assert not log.events_of("error")


def test_virtual_runs_are_bit_reproducible(tmp_path):
    sc = load_scenario("fig2")
    a, _ = run_method(sc, 3)
    b, _ = run_method(sc, 3)
    c, _ = run_method(sc, 4)
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()
    path = a.to_csv(tmp_path / "run.csv")
    again = read_runlog(path, sc.model.dt)
    assert again.steps == a.steps
    np.testing.assert_array_equal(np.array(again.est_params), np.array(a.est_params))


def test_replacement_follows_a_large_change():
    sc = load_scenario("cartpole")
    sc = sc.replace(schedule=((300, np.array([4.0, 0.3])),), max_steps=330)
    log, _ = run_method(sc, 0)
    fit_steps = sc.scheduler.fit_steps
    # cycles launched after the change complete fit_steps later
    after = [e for e in log.events_of("model_update") if e.step - fit_steps >= 300][:5]
    assert len(after) == 5
    assert any(e.detail == "replace" for e in after)
    arr = log.as_arrays()
    replaced = next(e.step for e in after if e.detail == "replace")
    before_err = abs(arr["est"][300, 0] - 4.0)
    assert abs(arr["est"][replaced, 0] - 4.0) < before_err


def test_rod_switches_to_explore_after_low_confidence_streak():
    sc = load_scenario("rod")
    log, _ = run_method(sc, 0, max_steps=40)
    updates = log.events_of("model_update")
    first = next(i for i, e in enumerate(updates) if e.detail == "explore")
    assert first >= sc.n_his - 1
    assert all(e.detail == "reject" for e in updates[:first])
    assert log.events_of("mode")[0].step == updates[first].step


def test_wallclock_smoke():
    sc = load_scenario("fig2")
    log, m = run_method(sc, 0, mode="wallclock")
    assert len(log) == sc.max_steps
    assert log.events_of("plan_swap")
    assert not log.events_of("error")
