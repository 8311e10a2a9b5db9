import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from primplan import kernels
from primplan.dynamics import State, SystemSpec, Trajectory, propagate
from primplan.env import (
    OCCUPIED,
    UNKNOWN,
    OccupancyGrid,
    Tunnel,
    Workspace,
    build_potential,
    collision_cost,
    distance_transform,
    in_tunnel,
    load_grid,
    potential_value,
    primitive_collides_static,
    sample_count,
    save_grid,
)


def brute_squared(occ):
    idx = np.argwhere(occ)
    out = np.full(occ.shape, np.inf)
    if idx.size == 0:
        return out
    for cell in np.ndindex(occ.shape):
        out[cell] = np.min(np.sum((idx - np.array(cell)) ** 2, axis=1))
    return out


def brute_distance(occ, res):
    return np.sqrt(brute_squared(occ)) * res


def test_edt_matches_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(10):
        occ = rng.random((50, 50)) < rng.uniform(0.005, 0.1)
        g = OccupancyGrid(np.zeros(2), 0.2, occ.astype(np.uint8))
        df = distance_transform(g)
        assert np.array_equal(df.d, brute_distance(occ, 0.2))


@pytest.mark.parametrize("use_numba", [False, True])
def test_edt_paths_agree(use_numba):
    rng = np.random.default_rng(1)
    occ = rng.random((37, 23)) < 0.05
    want = brute_squared(occ)
    assert np.array_equal(kernels.squared_edt(occ, use_numba=use_numba), want)


def test_edt_examples():
    g = OccupancyGrid.empty([0, 0], 0.5, (9, 9))
    assert np.all(np.isinf(distance_transform(g).d))
    one = g.fill_box([2.0, 2.0], [2.5, 2.5])
    assert int(one.occupied_mask().sum()) == 1
    d = distance_transform(one).d
    i, j = np.argwhere(one.occupied_mask())[0]
    assert d[i, j] == 0.0
    assert d[i + 1, j] == d[i - 1, j] == d[i, j + 1] == d[i, j - 1] == 0.5


def test_unknown_cells_are_free_for_distance():
    g = OccupancyGrid.empty([0, 0], 1.0, (5, 5)).fill_box([0, 0], [1, 1], UNKNOWN)
    assert np.all(np.isinf(distance_transform(g).d))
    assert not Workspace(g).occupied_at(np.array([[0.5, 0.5]]))[0]


def test_distance_lipschitz():
    rng = np.random.default_rng(2)
    occ = rng.random((30, 30)) < 0.03
    d = distance_transform(OccupancyGrid(np.zeros(2), 0.25, occ.astype(np.uint8))).d
    assert np.all(np.abs(np.diff(d, axis=0)) <= 0.25 + 1e-12)
    assert np.all(np.abs(np.diff(d, axis=1)) <= 0.25 + 1e-12)


def test_potential_examples():
    assert potential_value(0.0, 3.0, 1.0, 2.0) == 3.0
    assert potential_value(1.0, 3.0, 1.0, 2.0) == 0.0
    assert potential_value(0.5, 4.0, 1.0, 1.0) == 2.0
    with pytest.raises(ValueError):
        build_potential(None, 0.0, 1.0, 1.0)


@given(st.floats(0.1, 5), st.floats(0.1, 3), st.floats(0.2, 4))
def test_potential_bounded_and_monotone(F, thr, k):
    d = np.linspace(0, 2 * thr, 200)
    U = potential_value(d, F, thr, k)
    assert np.all((U >= 0) & (U <= F))
    assert np.all(np.diff(U) <= 1e-12)
    assert np.all(U[d >= thr] == 0)


def test_sample_count_examples(acc_spec):
    p = propagate(State.at_rest([0, 0], acc_spec), [0, 0], 0, 1.0)
    assert sample_count(p, acc_spec, 0.25) == 8
    assert sample_count(p, acc_spec, 5.0) == 2
    spec = SystemSpec(m=2, q=2, u_max=1.0, du=3, dt=0.5, v_max=3.0, a_max=1.0)
    p = propagate(State.at_rest([0, 0], spec), [0, 0], 0, 0.5)
    assert sample_count(p, spec, 0.1) == 15


def _field_ws():
    g = OccupancyGrid.empty([0, 0], 0.1, (60, 60)).fill_box([2.5, 2.5], [3.5, 3.5])
    return Workspace(g, True, (1.0, 1.0, 2.0))


def test_collision_cost_examples(acc_spec):
    ws = _field_ws()
    far = propagate(State.at_rest([0.3, 0.3], acc_spec), [1, 0], 0, 1.0)
    assert collision_cost(far, ws, 20) == 0.0
    hover = propagate(State.at_rest([2.2, 2.2], acc_spec), [0, 0], 0, 1.0)
    assert ws.potential_at(hover.positions([0.0]))[0] > 0
    assert collision_cost(hover, ws, 20) == 0.0


def test_collision_cost_refinement_oracle(acc_spec):
    ws = _field_ws()
    rng = np.random.default_rng(4)
    n_checked = 0
    for _ in range(200):
        s = State(rng.uniform(1.0, 5.0, 2), [rng.uniform(-1, 1, 2)], None, 0.0)
        p = propagate(s, rng.uniform(-1, 1, 2), 0, 1.0)
        n = sample_count(p, acc_spec, ws.resolution)
        coarse = collision_cost(p, ws, n)
        fine = collision_cost(p, ws, 10 * n)
        assert coarse >= 0
        if fine > 0.05:
            # the Riemann sum converges; the coarse one is a cell-sized quadrature
            assert abs(coarse - fine) <= 0.1 * fine + 0.1 * acc_spec.v_max * ws.resolution
            n_checked += 1
    assert n_checked > 20


def test_static_collision_examples(acc_spec):
    ws = _field_ws()
    through = propagate(State([1.5, 3.0], [[2.0, 0.0]], None, 0.0), [0, 0], 0, 1.0)
    assert primitive_collides_static(through, ws, 20)
    hover = propagate(State.at_rest([1.0, 1.0], acc_spec), [0, 0], 0, 1.0)
    assert not primitive_collides_static(hover, ws, 20)
    out = propagate(State.at_rest([5.8, 1.0], acc_spec), [1, 0], 0, 1.0)
    assert primitive_collides_static(out, ws, 20)
    unbounded = Workspace(ws.grid, False, None)
    assert not primitive_collides_static(out, unbounded, 20)


def test_static_collision_vs_dense(acc_spec):
    ws = _field_ws()
    occ = ws.grid.occupied_mask()
    rng = np.random.default_rng(9)
    for _ in range(500):
        s = State(rng.uniform(1.0, 5.0, 2), [rng.uniform(-2, 2, 2)], None, 0.0)
        p = propagate(s, rng.uniform(-1, 1, 2), 0, 1.0)
        n = sample_count(p, acc_spec, ws.resolution)
        ts = np.arange(0, 1.0 + 1e-9, 1e-3)
        pos = p.positions(ts)
        dense = bool(np.any(ws.occupied_at(pos)))
        verdict = primitive_collides_static(p, ws, n)
        if verdict:
            assert dense  # samples are a subset of the dense check
        elif dense:
            # a miss is only allowed for clips shallower than the sample spacing
            inside = ws.occupied_at(pos)
            idx = np.floor(pos[inside] / 0.1).astype(int)
            lo = idx * 0.1
            depth = np.minimum(pos[inside] - lo, lo + 0.1 - pos[inside]).min(axis=1)
            assert depth.max() <= acc_spec.v_max * 1.0 / (2 * n - 1) + 1e-9
        assert occ.shape == (60, 60)


def test_tunnel_examples(acc_spec):
    s = State.at_rest([0, 0], acc_spec)
    p1 = propagate(s, [1, 0], 0, 1.0)
    p2 = propagate(p1.end, [0, 0], 0, 1.0)
    tun = Tunnel.around(Trajectory([p1, p2]), 0.5, 0.25)
    assert in_tunnel(p1, tun, 8) and in_tunnel(p2, tun, 8)
    shifted = propagate(State.at_rest([0, 1.0], acc_spec), [1, 0], 0, 1.0)
    assert not in_tunnel(shifted, tun, 8)
    wide = Tunnel.around(Trajectory([p1]), math.inf, 0.25)
    assert in_tunnel(shifted, wide, 8)
    with pytest.raises(ValueError):
        Tunnel.around(Trajectory([p1]), 0.0, 0.25)


def test_tunnel_vs_dense_reference(acc_spec):
    rng = np.random.default_rng(6)
    s = State.at_rest([0, 0], acc_spec)
    segs = []
    for u in ([1, 0.5], [0, -0.5], [-0.5, 0], [0, 0.5]):
        segs.append(propagate(s, u, 0, 1.0))
        s = segs[-1].end
    ref = Trajectory(segs)
    r = 0.4
    tun = Tunnel.around(ref, r, 0.25)
    dense_ref = ref.sample_positions(np.linspace(0, ref.T, 20001))
    for _ in range(300):
        t0 = rng.uniform(0, ref.T - 1.0)
        st = State(ref.sample_positions([t0])[0] + rng.normal(scale=0.3, size=2), [rng.uniform(-1, 1, 2)], None, 0)
        p = propagate(st, rng.uniform(-1, 1, 2), 0, 1.0)
        pos = p.positions(np.linspace(0, 1.0, 8))
        d = np.min(np.linalg.norm(pos[:, None] - dense_ref[None], axis=2), axis=1).max()
        if abs(d - r) > 0.125:
            assert in_tunnel(p, tun, 8) == (d <= r)


def test_grid_json_round_trip(tmp_path):
    g = OccupancyGrid.empty([1, -2], 0.3, (4, 6)).fill_box([1, -2], [1.5, -1.5]).fill_box([2, 0], [2.2, 0.2], UNKNOWN)
    path = tmp_path / "g.json"
    save_grid(g, path)
    back = load_grid(path)
    assert np.array_equal(back.cells, g.cells) and back.resolution == 0.3
    assert np.array_equal(back.origin, g.origin)


def test_grid_loader_validates(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"origin": [0, 0], "resolution": 1.0, "dims": [2, 2], "cells": [0, 1, 0]}))
    with pytest.raises(ValueError, match="dims"):
        load_grid(bad)
    broken = tmp_path / "broken.json"
    broken.write_text('{"origin": [0, 0],\n "resolution": 1.0,\n oops}')
    with pytest.raises(ValueError, match=r"broken.json:3"):
        load_grid(broken)


def test_world_cell_round_trip():
    g = OccupancyGrid.empty([-1.0, 2.0], 0.25, (10, 12))
    for idx in np.ndindex(g.dims):
        assert g.world_to_cell(g.cell_center(idx)) == idx


def test_changed_cells():
    a = Workspace(OccupancyGrid.empty([0, 0], 1.0, (4, 4)))
    b = a.with_cells(np.where(np.eye(4) > 0, OCCUPIED, 0))
    assert sorted(a.changed_cells(b).tolist()) == [0, 5, 10, 15]
    assert a.changed_cells(a).size == 0
