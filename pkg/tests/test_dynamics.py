import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import rk4

from primplan.dynamics import (
    State,
    SystemSpec,
    Trajectory,
    check_continuity,
    check_dynamic_feasibility,
    evaluate_trajectory,
    feasible_mask,
    generate_control_set,
    primitive_coeffs,
    primitive_cost,
    propagate,
    wrap_angle,
)


def test_control_set_sizes():
    s1 = SystemSpec(m=1, q=2, u_max=2.0, du=3, dt=1.0, v_max=1.0, a_max=1.0)
    U, _ = generate_control_set(s1)
    assert sorted(U[:, 0].tolist()) == [-2.0, 0.0, 2.0]
    s2 = SystemSpec(m=2, q=2, u_max=1.0, du=3, dt=1.0, v_max=1.0, a_max=1.0)
    U, _ = generate_control_set(s2)
    assert U.shape == (9, 2) and any(np.all(U == 0, axis=1))
    s3 = SystemSpec(m=2, q=2, u_max=2.0, du=5, dt=1.0, v_max=1.0, a_max=1.0, yaw_enabled=True, u_psi_max=1.0, du_psi=3)
    U, W = generate_control_set(s3)
    assert U.shape == (75, 2) and W.shape == (75,)


@pytest.mark.parametrize("bad", [dict(du=4), dict(du=1), dict(u_max=0.0), dict(dt=-1.0), dict(v_max=0.0)])
def test_spec_rejects_invalid(bad):
    kw = dict(m=2, q=2, u_max=1.0, du=3, dt=1.0, v_max=1.0, a_max=1.0)
    kw.update(bad)
    with pytest.raises(ValueError):
        SystemSpec(**kw)


def test_propagate_examples(acc_spec):
    s = State.at_rest([0, 0], acc_spec)
    p = propagate(s, [1, 0], 0.0, 2.0)
    assert np.allclose(p.end.pos, [2, 0]) and np.allclose(p.end.vel, [2, 0])
    hover = propagate(s, [0, 0], 0.0, 1.0)
    assert np.array_equal(hover.end.stacked(), s.stacked()) and hover.end.t == 1.0


@pytest.mark.parametrize("q", [2, 3])
def test_propagate_matches_rk4(q):
    rng = np.random.default_rng(3 + q)
    n, m = 50, 2
    stacked = rng.normal(size=(n, q, m))
    u = rng.normal(size=(n, m))
    dt = rng.uniform(0.1, 1.5, size=n)
    want = rk4(stacked.transpose(0, 2, 1), u, dt[:, None])  # (n, m, q)
    for i in range(n):
        p = propagate(State(stacked[i, 0], stacked[i, 1:], None, 0.0), u[i], 0.0, float(dt[i]))
        assert np.allclose(p.end.stacked(), want[i].T, atol=1e-6)


def test_primitive_invariants(jerk_spec):
    s = State([1.0, -1.0], [[0.5, 0.2], [0.1, -0.3]], None, 0.0)
    p = propagate(s, [0.7, -0.2], 0.0, 0.8)
    assert np.allclose(p.positions([0.0])[0], s.pos, atol=1e-12)
    assert np.allclose(p.positions([0.8])[0], p.end.pos, atol=1e-9)
    ts = np.linspace(0, 0.8, 5)
    assert np.allclose(p.derivative_at(3, ts), [0.7, -0.2])


@given(
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.lists(st.floats(-1, 1), min_size=2, max_size=2),
    st.floats(0.05, 1.0),
    st.floats(0.05, 1.0),
)
def test_propagation_compositional(x, u, dt1, dt2):
    s = State(x[:2], [x[2:]], None, 0.0)
    a = propagate(s, u, 0.0, dt1)
    b = propagate(a.end, u, 0.0, dt2)
    c = propagate(s, u, 0.0, dt1 + dt2)
    assert np.allclose(b.end.stacked(), c.end.stacked(), atol=1e-9)


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.floats(0.01, 3.0), st.floats(0, 20))
def test_primitive_cost_symmetric(u, dt, rho):
    s = State([0, 0], [[0, 0]], None, 0.0)
    assert primitive_cost(propagate(s, u, 0, dt), rho) == primitive_cost(propagate(s, [-x for x in u], 0, dt), rho)


def test_primitive_cost_examples():
    s = State([0, 0], [[0, 0]], None, 0.0)
    assert primitive_cost(propagate(s, [0, 0], 0, 1.0), 0.0) == 0.0
    assert primitive_cost(propagate(s, [3, 4], 0, 2.0), 0.0) == 50.0
    assert primitive_cost(propagate(s, [1, 0], 0, 0.5), 10.0) == 5.5


def test_feasibility_examples():
    ok = SystemSpec(m=2, q=2, u_max=1.0, du=3, dt=1.0, v_max=2.0, a_max=1.0)
    tight = SystemSpec(m=2, q=2, u_max=1.0, du=3, dt=1.0, v_max=0.5, a_max=1.0)
    p = propagate(State.at_rest([0, 0], ok), [1, 0], 0.0, 1.0)
    assert check_dynamic_feasibility(p, ok)
    assert not check_dynamic_feasibility(p, tight)


def test_feasibility_matches_dense_sampling():
    rng = np.random.default_rng(11)
    spec = SystemSpec(m=2, q=3, u_max=2.0, du=3, dt=1.0, v_max=1.5, a_max=1.5, j_max=2.0)
    agree = 0
    for _ in range(500):
        stacked = rng.uniform(-1.5, 1.5, size=(3, 2))
        u = rng.uniform(-2, 2, size=2)
        p = propagate(State(stacked[0], stacked[1:], None, 0.0), u, 0.0, 1.0)
        ts = np.arange(0.0, 1.0 + 5e-5, 1e-4)
        dense_ok = all(np.max(np.abs(p.derivative_at(r, ts))) <= b + 1e-6 for r, b in ((1, 1.5), (2, 1.5)))
        margin = min(b - np.max(np.abs(p.derivative_at(r, ts))) for r, b in ((1, 1.5), (2, 1.5)))
        verdict = check_dynamic_feasibility(p, spec)
        if abs(margin) > 1e-6:
            assert verdict == dense_ok
        vec = feasible_mask(p.coeffs[None], 1.0, spec)[0]
        assert vec == verdict
        agree += 1
    assert agree == 500


def test_feasible_mask_matches_scalar(acc_spec):
    s = State([0, 0], [[1.5, -1.9]], None, 0.0)
    U, _ = acc_spec.controls
    coeffs = primitive_coeffs(s.stacked(), U)
    mask = feasible_mask(coeffs, acc_spec.dt, acc_spec)
    for i, u in enumerate(U):
        assert mask[i] == check_dynamic_feasibility(propagate(s, u, 0.0, acc_spec.dt), acc_spec)


def _random_traj(rng, n=5, yaw=False):
    s = State(rng.normal(size=2), [rng.normal(size=2)], 0.3 if yaw else None, 0.0)
    segs = []
    for _ in range(n):
        p = propagate(s, rng.uniform(-1, 1, 2), 0.4 if yaw else 0.0, float(rng.uniform(0.2, 1.0)))
        segs.append(p)
        s = p.end
    return Trajectory(segs)


def test_trajectory_evaluation_matches_segments():
    rng = np.random.default_rng(5)
    for _ in range(20):
        traj = _random_traj(rng)
        assert check_continuity(traj)
        assert math.isclose(traj.T, sum(s.dt for s in traj.segments))
        for t in rng.uniform(0, traj.T, 5):
            i = int(np.searchsorted(traj.knots, t, side="right") - 1)
            pos, _, _ = evaluate_trajectory(traj, t)
            assert np.allclose(pos, traj.segments[i].positions([t - traj.knots[i]])[0], atol=1e-12)
    pos0, _, _ = evaluate_trajectory(traj, 0.0)
    assert np.allclose(pos0, traj.segments[0].start.pos)
    posT, _, _ = evaluate_trajectory(traj, traj.T)
    assert np.allclose(posT, traj.segments[-1].end.pos, atol=1e-9)


def test_trajectory_domain_error():
    traj = _random_traj(np.random.default_rng(0), 2)
    with pytest.raises(ValueError):
        evaluate_trajectory(traj, traj.T + 1.0)


def test_yaw_is_wrapped():
    s = State([0, 0], [[0, 0]], 3.0, 0.0)
    p = propagate(s, [0, 0], 1.0, 1.0)
    assert -math.pi < p.end.yaw <= math.pi
    assert math.isclose(p.end.yaw, wrap_angle(4.0))
    assert wrap_angle(-math.pi) == math.pi
