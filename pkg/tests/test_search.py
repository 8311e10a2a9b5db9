import math

import numpy as np
import pytest
from conftest import TWO_PI, rest
from oracles import SPEC, enumeration_instance, free_cell_center, random_edit, random_world

from primplan.dynamics import State, SystemSpec, primitive_cost, propagate
from primplan.env import OCCUPIED, OccupancyGrid, Workspace, collision_cost
from primplan.obstacles import LVP, ConvexPolytope
from primplan.search import (
    GoalRegion,
    Lattice,
    Mode,
    PlanRequest,
    SearchGraph,
    Status,
    expand,
    fov_feasible,
    heuristic,
    plan_astar,
    plan_lpastar,
    prune_graph,
    update_edges,
    yaw_cost,
)
from primplan.validate import validate_plan


def open_request(spec, start, goal, **kw):
    ws = kw.pop("workspace", Workspace(OccupancyGrid.empty([-5, -5], 0.25, (40, 40))))
    return PlanRequest(spec, start, GoalRegion(goal, 0.25), workspace=ws, **kw)


def test_open_space_successor_count(acc_spec):
    assert len(expand(rest([0, 0], acc_spec), open_request(acc_spec, rest([0, 0], acc_spec), [3, 3]))) == 9


def test_speed_bound_prunes(acc_spec):
    fast = State([0.0, 0.0], [[2.0, 0.0]], None, 0.0)
    succ = expand(fast, open_request(acc_spec, fast, [3, 3]))
    assert len(succ) == 6
    assert all(p.u[0] <= 0 for p, _ in succ)


def test_yaw_control_set():
    spec = SystemSpec(m=2, q=2, u_max=1.0, du=3, dt=1.0, v_max=2.0, a_max=1.0,
                      yaw_enabled=True, u_psi_max=1.0, du_psi=3)
    s = rest([0, 0], spec, yaw=0.0)
    assert len(expand(s, open_request(spec, s, [3, 3]))) == 27


def test_edge_costs_match_components():
    spec = SystemSpec(m=2, q=2, u_max=1.0, du=3, dt=1.0, v_max=2.0, a_max=1.0,
                      yaw_enabled=True, u_psi_max=1.0, du_psi=3)
    rng = np.random.default_rng(3)
    ws = random_world(rng, cells=40, density=0.05)
    checked = 0
    while checked < 200:
        pos = free_cell_center(rng, ws)
        s = State(pos, [rng.choice([-1.0, 0.0, 1.0], 2)], float(rng.uniform(-3, 3)), 0.0)
        req = PlanRequest(spec, s, GoalRegion([9, 9], 0.25), rho_T=2.0, rho_c=1.5, rho_psi=0.7, workspace=ws)
        for p, c in expand(s, req):
            want = primitive_cost(p, 2.0) + 1.5 * collision_cost(p, ws, req.n_samples) + 0.7 * yaw_cost(p, req.n_samples)
            assert c == pytest.approx(want, rel=1e-12, abs=1e-12)
            checked += 1


def _straight(yaw, spec=None):
    spec = spec or SystemSpec(m=2, q=2, u_max=1.0, du=3, dt=1.0, v_max=2.0, a_max=1.0, yaw_enabled=True,
                              u_psi_max=1.0, du_psi=3)
    return propagate(State([0.0, 0.0], [[1.0, 0.0]], yaw, 0.0), [0, 0], 0.0, 1.0)


def test_yaw_cost_examples():
    assert yaw_cost(_straight(0.0), 20) == 0.0
    assert yaw_cost(propagate(State([0, 0], [[0, 0]], 1.0, 0.0), [0, 0], 0.5, 1.0), 20) == 0.0
    assert yaw_cost(_straight(math.pi / 2), 1000) == pytest.approx((math.pi / 2) ** 2, abs=1e-3)
    assert yaw_cost(_straight(None), 20) == 0.0


def test_fov_examples():
    p = _straight(0.3)
    assert fov_feasible(p, TWO_PI)
    assert not fov_feasible(_straight(math.pi), math.pi / 2)
    # pi/5 is inside the pi/4 half-angle; pi/3 is not
    assert fov_feasible(_straight(math.pi / 5), math.pi / 2)
    assert not fov_feasible(_straight(math.pi / 3), math.pi / 2)
    assert fov_feasible(_straight(math.pi / 3), math.pi)


def test_fov_catches_violation_between_grid_points():
    # direction swings while yaw stays: only a continuous-time check sees the peak
    s = State([0.0, 0.0], [[1.0, -1.0]], 0.0, 0.0)
    p = propagate(s, [0.0, 2.0], 0.0, 1.0)
    ts = np.linspace(0, 1, 100001)
    v = p.velocities(ts)
    worst = np.max(np.abs(np.arctan2(v[:, 1], v[:, 0]) - p.yaw_at(ts)))
    assert fov_feasible(p, 2 * worst + 1e-6)
    assert not fov_feasible(p, 2 * worst - 1e-6)


def test_heuristic_examples(acc_spec):
    req = open_request(acc_spec, rest([0, 0], acc_spec), [4, 3])
    assert heuristic(rest([4, 3], acc_spec), req) == 0.0
    tight = PlanRequest(acc_spec, rest([0, 0], acc_spec), GoalRegion([4, 3], 1e-12))
    assert heuristic(rest([0, 0], acc_spec), tight) == pytest.approx(2.0, abs=1e-8)


def test_start_in_goal(acc_spec):
    res = plan_astar(open_request(acc_spec, rest([1, 1], acc_spec), [1.1, 1.0]))
    assert res.ok and res.total_cost == 0.0 and res.trajectory.segments == []
    graph = SearchGraph()
    res = plan_lpastar(graph, open_request(acc_spec, rest([1, 1], acc_spec), [1.1, 1.0]))
    assert res.ok and res.total_cost == 0.0


def test_optimal_against_enumeration():
    rng = np.random.default_rng(100)
    for _ in range(10):
        req, best = enumeration_instance(rng)
        res = plan_astar(req)
        assert res.ok
        assert res.total_cost == pytest.approx(best, abs=1e-9)
        assert heuristic(req.start, req) <= best
        assert validate_plan(res.trajectory, req).ok


def test_cost_terms_sum_to_total():
    rng = np.random.default_rng(7)
    for _ in range(5):
        req, _ = enumeration_instance(rng, rho_c=2.0)
        res = plan_astar(req)
        t = res.terms
        assert t["J_q"] + t["rho_T_T"] + t["rho_c_J_c"] + t["rho_psi_J_psi"] == pytest.approx(res.total_cost, abs=1e-9)


def test_no_path_and_horizon(acc_spec):
    g = OccupancyGrid.empty([0, 0], 0.25, (32, 32))
    for lo, hi in (([4, 4], [7, 4.5]), ([4, 6.5], [7, 7]), ([4, 4], [4.5, 7]), ([6.5, 4], [7, 7])):
        g = g.fill_box(lo, hi)
    ws = Workspace(g)
    req = PlanRequest(acc_spec, rest([1, 1], acc_spec), GoalRegion([5.5, 5.5], 0.25), workspace=ws)
    res = plan_astar(req)
    assert res.status == Status.NO_PATH and math.isinf(res.total_cost)
    dyn = req.with_(mode=Mode.DYNAMIC, T_max=6.0)
    assert plan_astar(dyn).status == Status.HORIZON_EXCEEDED


def test_jerk_plan_validates(jerk_spec, open_ws):
    req = PlanRequest(jerk_spec, rest([1, 1], jerk_spec), GoalRegion([6, 4], 0.5), rho_T=5.0, workspace=open_ws)
    res = plan_astar(req)
    assert res.ok
    rep = validate_plan(res.trajectory, req)
    assert rep.ok, rep.violations


def test_dynamic_keys_include_time(acc_spec):
    s = rest([0, 0], acc_spec)
    later = State(s.pos, s.derivs, None, 2.0)
    assert Lattice(acc_spec, s, True).key(s) != Lattice(acc_spec, s, True).key(later)
    assert Lattice(acc_spec, s, False).key(s) == Lattice(acc_spec, s, False).key(later)


def test_moving_obstacle_plan_validates(acc_spec):
    box = LVP(ConvexPolytope.box([1.5, -1.0], [0.4, 1.5]), [0.0, 0.6], 0.05)
    req = open_request(acc_spec, rest([-2, 1], acc_spec), [4, 1], rho_T=5.0, mode=Mode.DYNAMIC,
                       T_max=20.0, obstacles=(box,))
    res = plan_astar(req)
    assert res.ok
    rep = validate_plan(res.trajectory, req)
    assert rep.ok, rep.violations


def test_lpastar_first_call_matches_astar():
    rng = np.random.default_rng(12)
    for _ in range(5):
        req, _ = enumeration_instance(rng)
        a = plan_astar(req)
        b = plan_lpastar(SearchGraph(), req)
        assert b.total_cost == pytest.approx(a.total_cost, abs=1e-9)
        assert b.trajectory.T == a.trajectory.T


def _lpa_setup(seed, cells=40):
    rng = np.random.default_rng(seed)
    ws = random_world(rng, cells=cells, density=0.08)
    s = free_cell_center(rng, ws)
    g = free_cell_center(rng, ws, s, 6.0)
    req = PlanRequest(SPEC, State.at_rest(s, SPEC), GoalRegion(g, 0.25), rho_T=4.0, rho_c=1.0, workspace=ws)
    return rng, req


def test_noop_update_needs_no_expansions():
    _, req = _lpa_setup(1)
    graph = SearchGraph()
    first = plan_lpastar(graph, req)
    assert update_edges(graph) == 0
    assert update_edges(graph, workspace=req.workspace) == 0
    again = plan_lpastar(graph, req)
    assert again.expansions == 0
    assert again.total_cost == first.total_cost
    assert [p.u.tolist() for p in again.trajectory.segments] == [p.u.tolist() for p in first.trajectory.segments]


def test_blocking_the_plan_makes_its_target_inconsistent():
    _, req = _lpa_setup(2)
    graph = SearchGraph()
    res = plan_lpastar(graph, req)
    seg = res.trajectory.segments[len(res.trajectory.segments) // 2]
    mid = seg.positions([0.5 * seg.dt])[0]
    cells = np.array(req.workspace.grid.cells)
    cells[req.workspace.grid.world_to_cell(mid)] = OCCUPIED
    ws = req.workspace.with_cells(cells)
    assert update_edges(graph, workspace=ws) >= 1
    again = plan_lpastar(graph, req.with_(workspace=ws))
    fresh = plan_astar(req.with_(workspace=ws))
    assert again.total_cost == pytest.approx(fresh.total_cost, abs=1e-9)
    assert again.total_cost >= res.total_cost


@pytest.mark.parametrize("seed", range(3))
def test_lpastar_equals_astar_under_map_edits(seed):
    rng, req = _lpa_setup(seed)
    goal = req.goal.center
    graph = SearchGraph()
    lpa = ast = 0
    for epoch in range(20):
        if epoch:
            ws = random_edit(rng, req.workspace, keep=[req.start.pos, goal], n=5)
            update_edges(graph, workspace=ws)
            req = req.with_(workspace=ws)
        r = plan_lpastar(graph, req)
        a = plan_astar(req)
        assert r.status == a.status
        if a.ok:
            assert r.total_cost == pytest.approx(a.total_cost, abs=1e-9)
            assert validate_plan(r.trajectory, req).ok
        lpa += r.expansions
        ast += a.expansions
    assert lpa < ast


def test_prune_then_repair_matches_astar():
    advances = 0
    seed = 0
    while advances < 30:
        rng, req = _lpa_setup(seed)
        seed += 1
        goal = req.goal.center
        graph = SearchGraph()
        res = plan_lpastar(graph, req)
        while res.ok and res.trajectory.segments:
            nxt = res.trajectory.segments[0].end
            ws = random_edit(rng, req.workspace, keep=[nxt.pos, goal], n=5)
            prune_graph(graph, nxt)
            update_edges(graph, workspace=ws)
            req = req.with_(workspace=ws, start=nxt)
            res = plan_lpastar(graph, req)
            fresh = plan_astar(req)
            assert res.status == fresh.status
            if fresh.ok:
                assert res.total_cost == pytest.approx(fresh.total_cost, abs=1e-9)
            advances += 1


def test_prune_examples(acc_spec):
    req = open_request(acc_spec, rest([0, 0], acc_spec), [3, 2], mode=Mode.DYNAMIC, T_max=30.0)
    graph = SearchGraph()
    res = plan_lpastar(graph, req)
    size = len(graph)
    prune_graph(graph, req.start)
    assert len(graph) == size
    old_key = graph.start.key
    nxt = res.trajectory.segments[0].end
    prune_graph(graph, nxt)
    assert graph.start.key == graph.lattice.key(nxt)
    assert old_key not in graph.nodes
    assert 0 < len(graph) < size
    assert all(n.state.t >= nxt.t - 1e-9 for n in graph.nodes.values())
    # a start the graph never saw resets it
    prune_graph(graph, rest([-3, -3], acc_spec))
    assert len(graph) == 0


def test_deterministic(acc_spec):
    rng = np.random.default_rng(5)
    req, _ = enumeration_instance(rng)
    a, b = plan_astar(req), plan_astar(req)
    assert a.total_cost == b.total_cost and a.expansions == b.expansions
    assert [p.u.tolist() for p in a.trajectory.segments] == [p.u.tolist() for p in b.trajectory.segments]


def test_request_validation(acc_spec):
    s = rest([0, 0], acc_spec)
    with pytest.raises(ValueError):
        PlanRequest(acc_spec, s, GoalRegion([1, 1], 0.25), rho_T=-1.0)
    with pytest.raises(ValueError):
        PlanRequest(acc_spec, s, GoalRegion([1, 1], 0.0))
    with pytest.raises(ValueError):
        PlanRequest(acc_spec, s, GoalRegion([1, 1], 0.25), mode=Mode.DYNAMIC, T_max=0.0)
    box = LVP(ConvexPolytope.box([3.0, 1.0], [0.4, 0.4]), [0, 0])
    with pytest.raises(ValueError):
        PlanRequest(acc_spec, s, GoalRegion([1, 1], 0.25), obstacles=(box,))
