import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsa import wire
from dsa.gbp_core import Factor, GaussianCanonical, mean_of
from dsa.swarm_graph import NotLocalized, Observation, RobotGraph

DT = 1 / 60


def test_integrate_velocity_examples():
    g = RobotGraph(0)
    for _ in range(30):
        g.integrate_velocity((0.5, 0), DT)
    assert np.allclose(g.p_odom, (0.25, 0), atol=1e-9)
    g.p_odom[:] = 0
    g.integrate_velocity((0, 0), DT)
    assert tuple(g.p_odom) == (0, 0)
    for k in range(10):
        g.integrate_velocity((1, 0) if k % 2 else (-1, 0), DT)
    assert np.allclose(g.p_odom, 0, atol=1e-15)
    with pytest.raises(ValueError):
        g.integrate_velocity((1, 0), 0.0)


def test_first_variable_has_weak_origin_anchor():
    g = RobotGraph(0)
    x0 = g.advance_timestep()
    assert x0.key == 0 and g.anchor.vars == [x0]
    assert g.anchor.z == (0, 0, 0.01)
    g.sweep(0)
    assert np.allclose(g.current_pose(), (0, 0))


def test_not_localized_before_any_variable():
    g = RobotGraph(0)
    assert not g.is_localized()
    with pytest.raises(NotLocalized):
        g.current_pose()


def test_window_slides_and_anchor_moves():
    g = RobotGraph(0)
    for _ in range(10):
        g.advance_timestep()
    assert len(g.window) == 10
    g.advance_timestep()
    assert len(g.window) == 10
    assert [v.key for v in g.window] == list(range(1, 11))
    assert g.anchor.vars[0] is g.window[0]
    g.check_invariants()


def test_new_variable_continues_pose():
    g = RobotGraph(0)
    g.advance_timestep()
    for _ in range(40):
        g.sweep(0)
    for step in range(25):
        g.integrate_velocity((0.3, -0.2), 0.5)
        before = g.current_pose()
        g.advance_timestep()
        assert np.allclose(g.current_pose(), before, atol=1e-6)


def test_observation_factor_keyed_and_replaced():
    g = RobotGraph(1)
    for _ in range(7):
        g.advance_timestep()
    f = g.record_observation(Observation(3, (0.4, 0.0), 6))
    assert (6, 3) in g.outward and f.z.lam == pytest.approx(2500)
    assert mean_of(f.z) == pytest.approx((0.4, 0.0))
    g.record_observation(Observation(3, (0.41, 0.0), 6))
    assert len(g.outward) == 1 and mean_of(g.outward[(6, 3)].z) == pytest.approx((0.41, 0.0))
    with pytest.raises(ValueError):
        g.record_observation(Observation(3, (0.4, 0.0), 5))
    with pytest.raises(ValueError):
        g.record_observation(Observation(1, (0.4, 0.0), 6))


def test_mid_interval_observation_expressed_at_variable_epoch():
    g = RobotGraph(0)
    g.advance_timestep()
    g.integrate_velocity((0.2, 0.0), 1.0)
    f = g.record_observation(Observation(1, (0.3, 0.1), 0))
    # robot has moved 0.2 since x0, so the object sits 0.5 ahead of x0
    assert mean_of(f.z) == pytest.approx((0.5, 0.1))


def test_eviction_removes_outward_factors_and_inbound_slots():
    g = RobotGraph(0)
    g.advance_timestep()
    g.record_observation(Observation(2, (0.3, 0), 0))
    g.deliver_remote_message(0, 2, GaussianCanonical(1, 0, 2))
    for _ in range(10):
        g.advance_timestep()
    assert not g.outward and not g.inbound
    assert not g.deliver_remote_message(0, 2, GaussianCanonical(1, 0, 2))
    g.check_invariants()


def test_current_pose_adds_odometry():
    g = RobotGraph(0)
    g.advance_timestep()
    g.window[0].belief = GaussianCanonical(2, 2, 2)
    g.integrate_velocity((0.1, 0), 1.0)
    assert np.allclose(g.current_pose(), (1.1, 1))
    assert np.allclose(g.local_origin((2, 2)), (0.9, 1))


def test_lone_robot_precision_never_increases():
    rng = np.random.default_rng(0)
    g = RobotGraph(0)
    lams = []
    for step in range(60):
        for _ in range(5):
            g.sweep_random(rng)
            g.integrate_velocity(rng.normal(size=2), 0.1)
        g.advance_timestep()
        if step > g.n_window:
            lams.append(g.newest.belief.lam)
    assert all(b <= a * (1 + 1e-9) for a, b in zip(lams, lams[1:]))


ops = st.lists(st.one_of(
    st.tuples(st.just("advance")),
    st.tuples(st.just("move"), st.floats(-1, 1), st.floats(-1, 1)),
    st.tuples(st.just("observe"), st.integers(1, 5), st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)),
    st.tuples(st.just("sweep"), st.integers(0, 10**6)),
    st.tuples(st.just("remote"), st.integers(0, 40), st.integers(1, 5), st.floats(0, 10)),
), max_size=120)


@settings(max_examples=60, deadline=None)
@given(ops, st.integers(1, 12))
def test_invariants_hold_under_random_operations(seq, n_window):
    g = RobotGraph(0, n_window=n_window)
    g.advance_timestep()
    for op in seq:
        if op[0] == "advance":
            g.advance_timestep()
        elif op[0] == "move":
            g.integrate_velocity(op[1:], 0.5)
        elif op[0] == "observe":
            g.record_observation(Observation(op[1], op[2:], g.current_ts))
        elif op[0] == "sweep":
            g.sweep(op[1] % len(g.factors))
        else:
            _, ts, rid, lam = op
            g.deliver_remote_message(ts, rid, GaussianCanonical(lam * 0.1, 0, lam))
        g.check_invariants()
    assert len(g.outward) <= g.n_window * 5


def test_two_stationary_robots_agree():
    a, b = RobotGraph(0), RobotGraph(1)
    rng = np.random.default_rng(0)
    offset = np.array([0.4, 0.0])
    steps_per_node = 5  # t_node / t_message
    for tick in range(100):  # 10 s at t_message = 0.1 s
        if tick % steps_per_node == 0:
            for g, rel in ((a, offset), (b, -offset)):
                g.advance_timestep()
                g.record_observation(Observation(1 - g.robot_id, tuple(rel + rng.normal(0, 0.02, 2)),
                                                 g.current_ts))
        a.sweep_random(rng)
        b.sweep_random(rng)
        wire.exchange(a, b) if tick % 2 == 0 else wire.exchange(b, a)
    gap = b.current_pose() - a.current_pose() - offset
    assert np.hypot(*gap) < 0.04


def test_anchor_is_single_and_on_oldest():
    g = RobotGraph(0, n_window=3)
    for _ in range(8):
        g.advance_timestep()
    anchors = [f for f in g.factors if f.kind == Factor.ANCHOR]
    assert anchors == [g.anchor] and g.anchor.vars[0] is g.window[0]
