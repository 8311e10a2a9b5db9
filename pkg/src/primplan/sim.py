"""Closed-loop replanning simulation: sense, repair the graph, replan, execute."""

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory, wrap_angle
from .env import UNKNOWN, Workspace
from .obstacles import LVP
from .search import Mode, SearchGraph, plan_astar, plan_lpastar, prune_graph, update_edges
from .validate import dense_times, polytope_clearance

log = logging.getLogger(__name__)


@dataclass(eq=False)
class ScriptedObstacle:
    """Ground-truth obstacle whose centre follows a piecewise polynomial in absolute time.

    ``pieces`` is a list of ``(t_start, coeffs)`` with ``coeffs`` of shape
    ``(m, d)`` in time since ``t_start``. The centre holds still after the
    last piece. The planner never sees the pieces, only position and velocity.
    """

    shape: object  # ConvexPolytope around the origin
    pieces: list
    v_e: float = 0.0

    def _piece(self, t):
        k = 0
        for i, (t0, _) in enumerate(self.pieces):
            if t >= t0:
                k = i
        return self.pieces[k]

    def center(self, t):
        t0, c = self._piece(t)
        return np.polynomial.polynomial.polyval(max(t - t0, 0.0), np.asarray(c).T)

    def centers(self, ts):
        return np.array([self.center(t) for t in ts])

    def velocity(self, t):
        t0, c = self._piece(t)
        c = np.asarray(c, float)
        d = c[:, 1:] * np.arange(1, c.shape[1]) if c.shape[1] > 1 else np.zeros((c.shape[0], 1))
        return np.polynomial.polynomial.polyval(max(t - t0, 0.0), d.T)

    def observe(self, t):
        """Linear-motion model seen by the planner at absolute time ``t``."""
        return LVP(self.shape.translated(self.center(t)), self.velocity(t), self.v_e, t)


def parse_scripted(obj):
    from .io import parse_shape

    pieces = [(float(p["t0"]), np.array(p["coeffs"], float)) for p in obj["pieces"]]
    return ScriptedObstacle(parse_shape(obj), pieces, float(obj.get("v_e", 0.0)))


def reveal(known, truth, pos, heading, fov, rng):
    """Copy ground truth into ``known`` for cells inside the sensor wedge.

    The wedge is every cell centre within ``rng`` of ``pos`` whose bearing is
    within ``fov / 2`` of ``heading``; the robot's own cell is always seen.
    """
    axes = [known.origin[k] + (np.arange(n) + 0.5) * known.resolution for k, n in enumerate(known.dims)]
    mesh = np.meshgrid(*axes, indexing="ij")
    dx = mesh[0] - pos[0]
    dy = mesh[1] - pos[1]
    dist = np.hypot(dx, dy)
    inside = dist <= rng
    if fov < 2 * math.pi:
        inside &= np.abs(wrap_angle(np.arctan2(dy, dx) - heading)) <= 0.5 * fov + 1e-12
    inside |= dist <= known.resolution
    cells = np.array(known.cells)
    cells[inside] = truth.cells[inside]
    return known.with_cells(cells)


@dataclass(eq=False)
class Epoch:
    index: int
    t: float
    status: str
    expansions: int
    runtime_ms: float
    cost: float
    astar_expansions: int | None = None
    astar_runtime_ms: float | None = None
    astar_cost: float | None = None
    inconsistent: int = 0


@dataclass(eq=False)
class SimResult:
    executed: Trajectory
    epochs: list
    reached: bool
    min_obstacle_clearance: float = math.inf
    final_known: object = None
    workspaces: list = field(default_factory=list)


def _heading(state, goal):
    if state.yaw is not None:
        return state.yaw
    v = state.vel
    if np.linalg.norm(v) > 1e-6:
        return math.atan2(v[1], v[0])
    d = goal.center - state.pos
    return math.atan2(d[1], d[0])


def simulate_replan(sc, compare_astar=False):
    """Run the sense/repair/replan/execute loop described by ``sc.replan``."""
    cfg = sc.replan or {}
    spec = sc.spec
    period = float(cfg.get("period", spec.dt))
    steps = max(1, int(round(period / spec.dt)))
    n_epochs = int(cfg.get("epochs", 60))
    sensor = cfg.get("sensor")
    scripted = [parse_scripted(o) for o in cfg.get("scripted", [])]
    bounded = sc.workspace.bounded if sc.workspace is not None else True
    pot = sc.workspace.potential_params if sc.workspace is not None else None
    known = sc.workspace.grid if sc.workspace is not None else None
    ws = sc.workspace
    dynamic = sc.mode == Mode.DYNAMIC or bool(scripted) or bool(sc.obstacles)
    graph = SearchGraph()
    cur = sc.start
    plan = []
    executed = []
    epochs = []
    reached = False
    for k in range(n_epochs):
        tau = cur.t
        if sensor and known is not None:
            fov = math.radians(sensor.get("fov_deg", 360.0))
            new = reveal(known, sc.truth, cur.pos, _heading(cur, sc.goal), fov, float(sensor.get("range", 5.0)))
            if not np.array_equal(new.cells, known.cells):
                known = new
                ws = Workspace(known, bounded, pot)
        obs = tuple(sc.obstacles) + tuple(o.observe(tau) for o in scripted)
        req = sc.request(
            start=cur,
            workspace=ws,
            obstacles=obs,
            mode=Mode.DYNAMIC if dynamic else Mode.STATIC,
        )
        t0 = time.perf_counter()
        incons = 0
        if graph.lattice is not None:
            prune_graph(graph, cur)
            if graph.lattice is not None:
                incons = update_edges(graph, workspace=ws, obstacles=obs)
        res = plan_lpastar(graph, req)
        lat = (time.perf_counter() - t0) * 1e3
        ep = Epoch(k, tau, res.status.value, res.expansions, lat, res.total_cost, inconsistent=incons)
        if compare_astar:
            a = plan_astar(req)
            ep.astar_expansions, ep.astar_runtime_ms, ep.astar_cost = a.expansions, a.runtime * 1e3, a.total_cost
        epochs.append(ep)
        if res.ok:
            plan = list(res.trajectory.segments)
        else:
            log.info("epoch %d: %s, keeping the previous plan", k, res.status.value)
        if not plan:
            reached = sc.goal.contains(cur)
            if not reached:
                log.warning("epoch %d: no plan to execute", k)
            break
        run, plan = plan[:steps], plan[steps:]
        executed += run
        cur = run[-1].end
        if not plan and sc.goal.contains(cur):
            reached = True
            break
    traj = Trajectory(executed, start=sc.start)
    clearance = math.inf
    if scripted and executed:
        ts = dense_times(traj.T)
        pos = traj.sample_positions(ts)
        for o in scripted:
            centers = o.centers(traj.t0 + ts)
            c = polytope_clearance(o.shape.A, o.shape.b, pos - centers)
            clearance = min(clearance, float(np.min(c)))
    return SimResult(traj, epochs, reached, clearance, known)


def unknown_fraction(grid):
    return float(np.mean(grid.cells == UNKNOWN))
