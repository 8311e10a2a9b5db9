"""Graph search over the motion-primitive lattice.

``plan_astar`` solves a request from scratch. ``SearchGraph`` +
``plan_lpastar`` keep the explored lattice between calls and repair it
incrementally (Lifelong Planning A*) after ``update_edges`` and
``prune_graph``. The goal is a region, so both searches route every goal
state into one virtual sink vertex.
"""

import heapq
import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from . import kernels
from .dynamics import (
    MotionPrimitive,
    State,
    Trajectory,
    check_continuity,
    end_derivatives,
    feasible_mask,
    primitive_coeffs,
    propagate,
    wrap_angle,
)
from .env import in_tunnel, sample_count, sample_times
from .obstacles import (
    primitive_intersects_lvp,
    primitive_intersects_robot,
    static_from,
)
from .poly import EverywhereZeroError, Polynomial, real_roots_in_interval

log = logging.getLogger(__name__)

INF = math.inf
TWO_PI = 2.0 * math.pi
KEY_SUBDIV = 16
EPS_V = 1e-3
DEFAULT_MAX_EXPANSIONS = 1_000_000


class Mode(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


class Status(str, Enum):
    SUCCESS = "Success"
    NO_PATH = "NoPath"
    HORIZON_EXCEEDED = "HorizonExceeded"


@dataclass(frozen=True, eq=False)
class GoalRegion:
    center: np.ndarray
    pos_tol: float = 0.5
    deriv_tol: tuple = ()  # per derivative order 1..q-1; missing entries mean unbounded

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if np.any(np.asarray(self.pos_tol) <= 0) or any(t <= 0 for t in self.deriv_tol):
            raise ValueError("goal tolerances must be positive")

    def contains(self, s):
        if np.any(np.abs(s.pos - self.center) > np.asarray(self.pos_tol) + 1e-9):
            return False
        for order, tol in enumerate(self.deriv_tol):
            if order < len(s.derivs) and np.linalg.norm(s.derivs[order]) > tol + 1e-9:
                return False
        return True


@dataclass(frozen=True, eq=False)
class PlanRequest:
    spec: object
    start: State
    goal: GoalRegion
    rho_T: float = 1.0
    rho_c: float = 0.0
    rho_psi: float = 0.0
    theta: float = TWO_PI
    tunnel: object = None
    T_max: float = INF
    mode: Mode = Mode.STATIC
    workspace: object = None
    obstacles: tuple = ()
    robots: tuple = ()
    time_origin: float = 0.0
    complete_mode: bool = True
    goal_hold: bool = False
    eps_v: float = EPS_V
    max_expansions: int = DEFAULT_MAX_EXPANSIONS

    def __post_init__(self):
        if min(self.rho_T, self.rho_c, self.rho_psi) < 0:
            raise ValueError("weights must be non-negative")
        if self.mode == Mode.DYNAMIC and not self.T_max > 0:
            raise ValueError("T_max must be positive in dynamic mode")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "robots", tuple(self.robots))
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.mode == Mode.STATIC and (self.obstacles or self.robots):
            raise ValueError("moving obstacles need dynamic mode")

    def with_(self, **kw):
        return replace(self, **kw)

    @property
    def r_M(self):
        return self.workspace.resolution if self.workspace is not None else 0.5 * self.spec.v_max * self.spec.dt

    @property
    def n_samples(self):
        return max(2, math.ceil(self.spec.v_max * self.spec.dt / self.r_M - 1e-9))


@dataclass(eq=False)
class PlanResult:
    trajectory: Trajectory
    total_cost: float
    expansions: int
    runtime: float
    status: Status
    terms: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == Status.SUCCESS


# --------------------------------------------------------------------------
# lattice keys
# --------------------------------------------------------------------------


class Lattice:
    """Maps states to integer keys relative to a fixed origin state.

    Quanta are the increments a single control step can produce on each
    derivative order, divided by ``KEY_SUBDIV``; states reached from the origin
    through the control set land on exact multiples, so equal keys mean equal
    states up to rounding noise.
    """

    def __init__(self, spec, origin, dynamic):
        self.spec = spec
        self.origin = origin.stacked()
        self.yaw0 = origin.yaw
        self.dynamic = dynamic
        q = spec.q
        self.quanta = np.array(
            [spec.u_step * spec.dt ** (q - r) / math.factorial(q - r) / KEY_SUBDIV for r in range(q)]
        )[:, None]
        self.yaw_q = spec.u_psi_step * spec.dt / KEY_SUBDIV if spec.u_psi_step > 0 else 0.0

    def key(self, s):
        idx = np.rint((s.stacked() - self.origin) / self.quanta).astype(np.int64)
        k = tuple(idx.ravel().tolist())
        if self.yaw0 is not None and self.yaw_q > 0:
            k += (int(round(wrap_angle(s.yaw - self.yaw0) / self.yaw_q)),)
        if self.dynamic:
            k += (int(round(s.t / self.spec.dt)),)
        return k


# --------------------------------------------------------------------------
# cost terms and constraints
# --------------------------------------------------------------------------


def yaw_cost(p, n_samples, eps_v=EPS_V):
    """Trapezoid-rule integral of the squared wrapped angle between yaw and travel direction.

    Samples slower than ``eps_v`` contribute nothing.
    """
    if p.start.yaw is None:
        return 0.0
    ts = sample_times(p.dt, n_samples)
    v = p.velocities(ts)
    speed = np.hypot(v[:, 0], v[:, 1])
    xi = np.arctan2(v[:, 1], v[:, 0])
    diff = wrap_angle(p.yaw_at(ts) - xi)
    f = np.where(speed >= eps_v, diff * diff, 0.0)
    w = np.full(n_samples, p.dt / (n_samples - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return float(np.dot(w, f))


def _pmul(a, b):
    out = [0.0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _padd(a, b, sb=1.0):
    n = max(len(a), len(b))
    return [(a[i] if i < len(a) else 0.0) + sb * (b[i] if i < len(b) else 0.0) for i in range(n)]


def _fov_candidates(p, eps_v):
    # plain lists: these polynomials have degree <= 2q and numpy's helpers cost more than the math
    vx, vy = (list(map(float, c)) for c in _vel_coeffs(p)[:2])
    ax = [i * vx[i] for i in range(1, len(vx))] or [0.0]
    ay = [i * vy[i] for i in range(1, len(vy))] or [0.0]
    speed2 = _padd(_pmul(vx, vx), _pmul(vy, vy))
    cross = _padd(_pmul(vx, ay), _pmul(vy, ax), -1.0)
    cands = []
    for poly in (_padd([p.u_psi * x for x in speed2], cross, -1.0), _padd(speed2, [eps_v * eps_v], -1.0)):
        try:
            cands += real_roots_in_interval(poly, 0.0, p.dt)
        except EverywhereZeroError:
            pass
    return np.array(sorted(cands))


def _fov_ok(p, ts, theta, eps_v):
    v = p.velocities(ts)
    speed = np.hypot(v[:, 0], v[:, 1])
    live = speed >= eps_v * (1.0 - 1e-9)
    if not np.any(live):
        return True
    diff = wrap_angle(p.yaw_at(ts[live]) - np.arctan2(v[live, 1], v[live, 0]))
    return bool(np.all(np.abs(diff) <= 0.5 * theta + 1e-9))


def _vel_coeffs(p):
    c = p.coeffs
    n = c.shape[1]
    return c[:, 1:] * np.arange(1, n)


def fov_feasible(p, theta, eps_v=EPS_V):
    """True iff the travel direction stays within ``theta / 2`` of the yaw on the whole primitive.

    Checks the window ends, every stationary point of ``yaw - direction`` and the
    points where the speed crosses ``eps_v``; the angle difference is monotone in
    between, so this covers continuous time, not just a sample grid.
    """
    if theta >= TWO_PI or p.start.yaw is None:
        return True
    # a uniform grid rejects most infeasible primitives without root finding
    if not _fov_ok(p, _times(p.dt, 17), theta, eps_v):
        return False
    return _fov_exact(p, theta, eps_v)


def _fov_exact(p, theta, eps_v):
    ts = _fov_candidates(p, eps_v)
    return ts.size == 0 or _fov_ok(p, ts, theta, eps_v)


def heuristic(s, req):
    """Admissible time lower bound ``rho_T * max_axis(gap / v_max)``.

    ``gap`` is the distance left to the goal box on each axis.
    """
    gap = np.maximum(np.abs(s.pos - req.goal.center) - np.asarray(req.goal.pos_tol) - 1e-9, 0.0)
    return req.rho_T * float(np.max(gap)) / req.spec.v_max


# --------------------------------------------------------------------------
# successor generation
# --------------------------------------------------------------------------


@dataclass(eq=False)
class Successor:
    ctrl: int
    prim: MotionPrimitive
    base: float  # |u|^2 dt + rho_T dt + rho_psi J_psi
    jc: float
    jpsi: float
    static_blocked: bool
    dyn_blocked: bool
    cells: np.ndarray
    bbox: tuple

    def cost(self, rho_c):
        if self.static_blocked or self.dyn_blocked:
            return INF
        return self.base + rho_c * self.jc


@lru_cache(maxsize=64)
def _times(dt, n):
    ts = np.linspace(0.0, dt, n)
    ts.setflags(write=False)
    return ts


def _static_eval(coeffs, dt, ws, n_samples):
    n, m, d1 = coeffs.shape
    if ws is None:
        return np.zeros(n, bool), np.zeros(n), [np.empty(0, np.int64)] * n
    flat = coeffs.reshape(n * m, d1)
    ts_col = _times(dt, 2 * n_samples)
    pos_col = kernels.eval_polys(flat, ts_col).reshape(n, m, -1).transpose(0, 2, 1)
    idx_col = ws.flat_index(pos_col.reshape(-1, m)).reshape(n, -1)
    occ = ws._occ_flat
    blocked = np.any(np.where(idx_col >= 0, occ[np.maximum(idx_col, 0)], ws.bounded), axis=1)
    ts = _times(dt, n_samples)
    pos = kernels.eval_polys(flat, ts).reshape(n, m, -1).transpose(0, 2, 1)
    idx = ws.flat_index(pos.reshape(-1, m)).reshape(n, -1)
    if ws._u_flat is not None:
        vel = kernels.eval_polys(flat[:, 1:] * np.arange(1, d1), ts).reshape(n, m, -1)
        speed = np.sqrt(np.sum(vel * vel, axis=1))
        U = np.where(idx >= 0, ws._u_flat[np.maximum(idx, 0)], 0.0)
        jc = np.sum(U * speed, axis=1) * (dt / (n_samples - 1))
    else:
        jc = np.zeros(n)
    both = np.concatenate([idx_col, idx], axis=1)
    cells = [row[row >= 0] for row in both]  # duplicates are harmless for the cell index
    return blocked, jc, cells


def _yaw_batch(coeffs, yaw0, rates, dt, n_samples, theta, eps_v):
    """Yaw cost of every primitive, plus a mask of those passing the FOV test on a uniform grid.

    Same arithmetic as :func:`yaw_cost`, batched over the control set.
    """
    n, m, d1 = coeffs.shape
    vflat = (coeffs[:, :2, 1:] * np.arange(1, d1)).reshape(2 * n, d1 - 1)

    def angles(ts):
        v = kernels.eval_polys(vflat, ts).reshape(n, 2, -1)
        speed = np.hypot(v[:, 0], v[:, 1])
        diff = wrap_angle(yaw0 + rates[:, None] * ts[None, :] - np.arctan2(v[:, 1], v[:, 0]))
        return speed, diff

    speed, diff = angles(_times(dt, n_samples))
    f = np.where(speed >= eps_v, diff * diff, 0.0)
    w = np.full(n_samples, dt / (n_samples - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    jpsi = f @ w
    if theta >= TWO_PI:
        return jpsi, np.ones(n, bool)
    speed, diff = angles(_times(dt, 17))
    live = speed >= eps_v * (1.0 - 1e-9)
    grid_ok = ~np.any(live & (np.abs(diff) > 0.5 * theta + 1e-9), axis=1)
    return jpsi, grid_ok


def coeff_bounds(coeffs, dt):
    """Conservative per-axis box of polynomials ``(..., m, d)`` over ``[0, dt]``."""
    powers = dt ** np.arange(coeffs.shape[-1])
    spread = np.sum(np.abs(coeffs[..., 1:]) * powers[1:], axis=-1)
    return coeffs[..., 0] - spread, coeffs[..., 0] + spread


def _segment_boxes(traj):
    boxes = getattr(traj, "_seg_boxes", None)
    if boxes is None:
        if traj.segments:
            coeffs = np.stack([seg.coeffs for seg in traj.segments])
            dts = np.array([seg.dt for seg in traj.segments])
            powers = dts[:, None] ** np.arange(coeffs.shape[-1])[None]
            spread = np.sum(np.abs(coeffs[..., 1:]) * powers[:, None, 1:], axis=-1)
            boxes = (coeffs[..., 0] - spread, coeffs[..., 0] + spread)
        else:
            boxes = (np.empty((0, traj.start.pos.shape[0])),) * 2
        traj._seg_boxes = boxes
    return boxes


def robot_window_box(ro, a, b, complete_mode):
    """Conservative box swept by another robot's inflated geometry over its local times [a, b]."""
    traj = ro.traj
    horizon = ro.horizon()
    lo_parts, hi_parts = [], []
    seg_lo, seg_hi = _segment_boxes(traj)
    if traj.segments and a <= horizon:
        knots = np.asarray(traj.knots)
        sel = (knots[:-1] <= min(b, horizon) + 1e-12) & (knots[1:] >= a - 1e-12)
        if np.any(sel):
            lo_parts.append(seg_lo[sel].min(axis=0))
            hi_parts.append(seg_hi[sel].max(axis=0))
    static = static_from(ro, complete_mode)
    if static is not None and b >= static:
        pose = traj.sample_positions([static], hold=True)[0]
        lo_parts.append(pose)
        hi_parts.append(pose)
    if not lo_parts:
        return None
    verts = ro.geometry.vertices
    return np.min(lo_parts, axis=0) + verts.min(axis=0), np.max(hi_parts, axis=0) + verts.max(axis=0)


def _near_moving(lo, hi, t_start, req):
    """Mask of boxes that may meet a moving obstacle during ``[t_start, t_start + dt]``."""
    n = lo.shape[0]
    if not (req.obstacles or req.robots):
        return np.zeros(n, bool)
    near = np.zeros(n, bool)
    for ro in req.robots:
        box = robot_window_box(ro, t_start + ro.start_offset, t_start + ro.start_offset + req.spec.dt, req.complete_mode)
        if box is not None:
            near |= np.all(lo <= box[1] + 1e-9, axis=1) & np.all(box[0] <= hi + 1e-9, axis=1)
    t_abs = req.time_origin + t_start
    for lvp in req.obstacles:
        a = max(t_abs, lvp.active_from)
        b = min(t_abs + req.spec.dt, lvp.active_until)
        if b < a:
            continue
        blo, bhi = lvp.swept_bbox(a - lvp.active_from, b - lvp.active_from)
        near |= np.all(lo <= bhi + 1e-9, axis=1) & np.all(blo <= hi + 1e-9, axis=1)
    return near


def dynamic_blocked(prim, t_start, req):
    """Whether ``prim`` starting at plan time ``t_start`` hits any moving obstacle or robot."""
    t_abs = req.time_origin + t_start
    for lvp in req.obstacles:
        if primitive_intersects_lvp(prim, lvp, t_abs):
            return True
    for ro in req.robots:
        if primitive_intersects_robot(prim, ro, t_start, req.complete_mode):
            return True
    return False


def generate_successors(s, req):
    """All map-independent-feasible successors of ``s``, with their map-dependent verdicts.

    Returns ``(successors, horizon_hit)``. Successors blocked by the map or by
    moving obstacles are kept (flagged) so incremental search can revive them.
    """
    spec = req.spec
    dt = spec.dt
    if req.mode == Mode.DYNAMIC and s.t + dt > req.T_max + 1e-9:
        return [], True
    U, W = spec.controls
    stacked = s.stacked()
    coeffs = primitive_coeffs(stacked, U)
    ok = feasible_mask(coeffs, dt, spec)
    idx_ok = np.flatnonzero(ok)
    if idx_ok.size == 0:
        return [], False
    coeffs = coeffs[idx_ok]
    ends = end_derivatives(coeffs, dt, spec.q)
    n_s = req.n_samples
    blocked, jc, cells = _static_eval(coeffs, dt, req.workspace, n_s)
    box_lo, box_hi = coeff_bounds(coeffs, dt)
    near = _near_moving(box_lo, box_hi, s.t, req)
    with_yaw = spec.yaw_enabled and s.yaw is not None
    if with_yaw:
        jpsis, fov_grid = _yaw_batch(coeffs, s.yaw, W[idx_ok], dt, n_s, req.theta, req.eps_v)
    out = []
    for j, ci in enumerate(idx_ok):
        yaw = None if s.yaw is None else wrap_angle(s.yaw + W[ci] * dt)
        end = State(ends[j, 0], ends[j, 1:], yaw, s.t + dt)
        prim = MotionPrimitive(s, U[ci], float(W[ci]), dt, coeffs[j], end)
        if req.tunnel is not None and not in_tunnel(prim, req.tunnel, n_s):
            continue
        if with_yaw and req.theta < TWO_PI and not (fov_grid[j] and _fov_exact(prim, req.theta, req.eps_v)):
            continue
        jpsi = float(jpsis[j]) if with_yaw else 0.0
        base = float(np.dot(U[ci], U[ci])) * dt + req.rho_T * dt + req.rho_psi * jpsi
        bbox = (box_lo[j], box_hi[j])
        dyn = False
        if not blocked[j] and near[j]:
            dyn = dynamic_blocked(prim, s.t, req)
        out.append(Successor(int(ci), prim, base, float(jc[j]), jpsi, bool(blocked[j]), dyn, cells[j], bbox))
    return out, False


def expand(s, req):
    """Feasible successors of ``s`` as ``(primitive, edge_cost)`` pairs."""
    succs, _ = generate_successors(s, req)
    return [(x.prim, x.cost(req.rho_c)) for x in succs if math.isfinite(x.cost(req.rho_c))]


def hold_is_safe(s, req):
    """Whether staying at ``s.pos`` from ``s.t`` on stays clear of every moving obstacle."""
    if not (req.obstacles or req.robots):
        return True
    horizon = 0.0
    for ro in req.robots:
        if math.isinf(ro.cutoff):
            horizon = max(horizon, ro.traj.T - ro.start_offset)
    for lvp in req.obstacles:
        horizon = max(horizon, min(lvp.active_until, req.time_origin + req.T_max) - req.time_origin)
    dur = max(horizon - s.t, 0.0) + req.spec.dt
    if math.isinf(dur):
        dur = req.spec.dt
    q = s.stacked().shape[0]
    rest = State(s.pos, np.zeros((q - 1, s.pos.shape[0])), s.yaw, s.t)
    coeffs = primitive_coeffs(rest.stacked(), np.zeros(s.pos.shape[0]))
    hover = MotionPrimitive(rest, np.zeros(s.pos.shape[0]), 0.0, dur, coeffs, rest)
    # robots with a finite trust horizon will replan around us; only fully committed ones matter
    held = req.with_(robots=tuple(r for r in req.robots if math.isinf(r.cutoff)))
    return not dynamic_blocked(hover, s.t, held)


def is_goal(s, req):
    if not req.goal.contains(s):
        return False
    if req.goal_hold and req.mode == Mode.DYNAMIC:
        return hold_is_safe(s, req)
    return True


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------


def _make_result(start, steps, req, expansions, runtime, status):
    """``steps`` is a list of :class:`Successor` in path order."""
    # re-propagate so time stamps and rounding follow this path exactly
    prims = []
    cur = start
    for x in steps:
        p = propagate(cur, x.prim.u, x.prim.u_psi, x.prim.dt)
        prims.append(p)
        cur = p.end
    traj = Trajectory(prims, start=start)
    if not check_continuity(traj):
        raise AssertionError("planner produced a discontinuous trajectory")
    J_q = sum(float(np.dot(x.prim.u, x.prim.u)) * x.prim.dt for x in steps)
    J_c = sum(x.jc for x in steps)
    J_psi = sum(x.jpsi for x in steps)
    total = sum(x.cost(req.rho_c) for x in steps)
    terms = {
        "J_q": J_q,
        "T": traj.T,
        "rho_T_T": req.rho_T * traj.T,
        "J_c": J_c,
        "rho_c_J_c": req.rho_c * J_c,
        "J_psi": J_psi,
        "rho_psi_J_psi": req.rho_psi * J_psi,
    }
    return PlanResult(traj, float(total), expansions, runtime, status, terms)


def _failure(req, expansions, runtime, horizon_hit):
    status = Status.HORIZON_EXCEEDED if horizon_hit else Status.NO_PATH
    return PlanResult(Trajectory([], start=req.start), INF, expansions, runtime, status, {})


# --------------------------------------------------------------------------
# A*
# --------------------------------------------------------------------------


def plan_astar(req):
    """Optimal primitive chain from ``req.start`` into the goal region.

    Ties on ``f`` go to the larger ``g``, then to the smaller lattice key.
    """
    t0 = time.perf_counter()
    lattice = Lattice(req.spec, req.start, req.mode == Mode.DYNAMIC)
    if is_goal(req.start, req):
        return _make_result(req.start, [], req, 0, time.perf_counter() - t0, Status.SUCCESS)
    start_key = lattice.key(req.start)
    g = {start_key: 0.0}
    parent = {start_key: None}
    states = {start_key: req.start}
    closed = set()
    heap = [(heuristic(req.start, req), -0.0, start_key)]
    expansions = 0
    horizon_hit = False
    while heap:
        f, neg_g, key = heapq.heappop(heap)
        if key in closed or -neg_g > g[key] + 1e-12:
            continue
        s = states[key]
        if is_goal(s, req):
            steps = []
            k = key
            while parent[k] is not None:
                pk, succ = parent[k]
                steps.append(succ)
                k = pk
            steps.reverse()
            return _make_result(req.start, steps, req, expansions, time.perf_counter() - t0, Status.SUCCESS)
        closed.add(key)
        expansions += 1
        if expansions > req.max_expansions:
            log.warning("expansion cap %d reached", req.max_expansions)
            break
        succs, hh = generate_successors(s, req)
        horizon_hit |= hh
        gs = g[key]
        for x in succs:
            c = x.cost(req.rho_c)
            if not math.isfinite(c):
                continue
            nk = lattice.key(x.prim.end)
            if nk in closed:
                continue
            ng = gs + c
            if ng < g.get(nk, INF) - 1e-12:
                g[nk] = ng
                parent[nk] = (key, x)
                states[nk] = x.prim.end
                heapq.heappush(heap, (ng + heuristic(x.prim.end, req), -ng, nk))
    return _failure(req, expansions, time.perf_counter() - t0, horizon_hit)


# --------------------------------------------------------------------------
# LPA*
# --------------------------------------------------------------------------


class _Node:
    __slots__ = ("key", "state", "g", "rhs", "succs", "preds", "in_region", "goal", "qkey", "h", "horizon_hit")

    def __init__(self, key, state):
        self.key = key
        self.state = state
        self.g = INF
        self.rhs = INF
        self.succs = None
        self.preds = {}
        self.in_region = False
        self.goal = False
        self.qkey = None
        self.h = 0.0
        self.horizon_hit = False


class _Edge:
    __slots__ = ("src", "dst", "succ", "cost", "alive")

    def __init__(self, src, dst, succ, cost):
        self.src = src
        self.dst = dst
        self.succ = succ
        self.cost = cost
        self.alive = True


GOAL_KEY = ("__goal__",)


class SearchGraph:
    """Persistent LPA* state: vertices, cached edges and the priority queue."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.nodes = {}
        self.heap = []
        self.seq = 0
        self.lattice = None
        self.start = None
        self.req = None
        self.sink = _Node(GOAL_KEY, None)
        self.goal_nodes = set()
        self.cell_index = defaultdict(list)
        self.all_edges = []
        self.dead_edges = 0

    def __len__(self):
        return len(self.nodes)

    # -- queue -----------------------------------------------------------
    def calc_key(self, n):
        k = min(n.g, n.rhs)
        return (k + n.h, k)

    def update_queue(self, n):
        if n.g != n.rhs:
            k = self.calc_key(n)
            if n.qkey != k:
                n.qkey = k
                self.seq += 1
                heapq.heappush(self.heap, (k[0], k[1], self.seq, n))
        else:
            n.qkey = None

    def recompute_rhs(self, n):
        if n is self.start:
            n.rhs = 0.0
        elif n is self.sink:
            n.rhs = min((x.g for x in self.goal_nodes), default=INF)
        else:
            best = INF
            for e in n.preds.values():
                v = e.src.g + e.cost
                if v < best:
                    best = v
            n.rhs = best

    # -- vertices and edges ----------------------------------------------
    def _node(self, state):
        key = self.lattice.key(state)
        n = self.nodes.get(key)
        if n is None:
            n = _Node(key, state)
            n.h = heuristic(state, self.req)
            n.in_region = self.req.goal.contains(state)
            n.goal = n.in_region and is_goal(state, self.req)
            if n.goal:
                self.goal_nodes.add(n)
            self.nodes[key] = n
        return n

    def ensure_succs(self, u):
        if u.succs is not None:
            return u.succs
        succs, hh = generate_successors(u.state, self.req)
        u.horizon_hit = hh
        u.succs = []
        rho_c = self.req.rho_c
        for x in succs:
            v = self._node(x.prim.end)
            if v is u:
                continue
            e = _Edge(u, v, x, x.cost(rho_c))
            old = v.preds.get(u.key)
            if old is not None and old.cost <= e.cost:
                continue
            if old is not None:
                old.alive = False
                u.succs.remove(old)
            v.preds[u.key] = e
            u.succs.append(e)
            self.all_edges.append(e)
            for c in set(x.cells.tolist()):
                self.cell_index[c].append(e)
        return u.succs


def _init_graph(graph, req):
    graph.reset()
    graph.req = req
    graph.lattice = Lattice(req.spec, req.start, req.mode == Mode.DYNAMIC)
    s = graph._node(req.start)
    graph.start = s
    s.rhs = 0.0
    graph.update_queue(s)


def _compute_shortest_path(graph):
    G = graph.sink
    heap = graph.heap
    expansions = 0
    cap = graph.req.max_expansions
    while heap:
        k1, k2, _, u = heap[0]
        if u.qkey != (k1, k2):
            heapq.heappop(heap)
            continue
        gk = graph.calc_key(G)
        # ties must be processed: an underconsistent goal vertex shares the sink's key
        if (k1, k2) > gk and G.rhs == G.g:
            break
        heapq.heappop(heap)
        u.qkey = None
        expansions += 1
        if expansions > cap:
            log.warning("expansion cap %d reached", cap)
            break
        if u.g > u.rhs:
            u.g = u.rhs
            if u is G:
                continue
            for e in graph.ensure_succs(u):
                v = e.dst
                c = u.g + e.cost
                if c < v.rhs:
                    v.rhs = c
                    graph.update_queue(v)
            if u.goal and u.g < G.rhs:
                G.rhs = u.g
                graph.update_queue(G)
        else:
            u.g = INF
            graph.recompute_rhs(u)
            graph.update_queue(u)
            if u is G:
                continue
            for e in graph.ensure_succs(u):
                graph.recompute_rhs(e.dst)
                graph.update_queue(e.dst)
            if u.goal:
                graph.recompute_rhs(G)
                graph.update_queue(G)
    return expansions


def _extract(graph):
    G = graph.sink
    best = None
    for n in graph.goal_nodes:
        if n.g == G.g and (best is None or n.key < best.key):
            best = n
    steps = []
    v = best
    guard = len(graph.nodes) + 1
    while v is not graph.start:
        guard -= 1
        if guard < 0:
            raise RuntimeError("path extraction did not reach the start")
        cand = None
        for e in v.preds.values():
            c = e.src.g + e.cost
            if cand is None or c < cand[0] - 1e-12 or (abs(c - cand[0]) <= 1e-12 and e.succ.ctrl < cand[1].succ.ctrl):
                cand = (c, e)
        e = cand[1]
        steps.append(e.succ)
        v = e.src
    steps.reverse()
    return steps


def plan_lpastar(graph, req):
    """Plan with LPA*, reusing whatever ``graph`` holds from earlier calls.

    An empty graph is initialized from ``req``. If ``req.start`` is not the
    graph's current start, the graph is pruned to it first.
    """
    t0 = time.perf_counter()
    if graph.lattice is None or graph.req is None or graph.req.spec != req.spec or graph.req.mode != req.mode:
        _init_graph(graph, req)
    else:
        if graph.lattice.key(req.start) != graph.start.key:
            prune_graph(graph, req.start)
            if graph.lattice is None:
                _init_graph(graph, req)
        _retarget(graph, req)
    if is_goal(req.start, req):
        return _make_result(graph.start.state, [], req, 0, time.perf_counter() - t0, Status.SUCCESS)
    expansions = _compute_shortest_path(graph)
    runtime = time.perf_counter() - t0
    if math.isinf(graph.sink.g):
        hh = any(n.horizon_hit for n in graph.nodes.values())
        return _failure(req, expansions, runtime, hh)
    steps = _extract(graph)
    return _make_result(graph.start.state, steps, req, expansions, runtime, Status.SUCCESS)


def _retarget(graph, req):
    """Adopt request fields that do not change edge costs (goal, horizon, weights on keys)."""
    old = graph.req
    same_goal = (
        np.array_equal(old.goal.center, req.goal.center)
        and np.array_equal(np.asarray(old.goal.pos_tol), np.asarray(req.goal.pos_tol))
        and tuple(old.goal.deriv_tol) == tuple(req.goal.deriv_tol)
        and old.goal_hold == req.goal_hold
    )
    cost_fields = ("rho_T", "rho_c", "rho_psi", "theta", "tunnel", "T_max", "eps_v", "complete_mode", "time_origin")
    if any(getattr(old, f) is not getattr(req, f) and getattr(old, f) != getattr(req, f) for f in cost_fields):
        # edge costs or feasibility changed: start over from the current start
        start = graph.start.state
        _init_graph(graph, req.with_(start=start))
        return
    ws_changed = old.workspace is not req.workspace
    obs_changed = old.obstacles != req.obstacles or old.robots != req.robots
    if ws_changed or obs_changed:
        update_edges(
            graph,
            workspace=req.workspace if ws_changed else None,
            obstacles=req.obstacles if obs_changed else None,
            robots=req.robots if obs_changed else None,
        )
    graph.req = req.with_(start=graph.start.state)
    if not same_goal:
        graph.goal_nodes = set()
        for n in graph.nodes.values():
            n.h = heuristic(n.state, graph.req)
            n.in_region = req.goal.contains(n.state)
            n.goal = n.in_region and is_goal(n.state, graph.req)
            if n.goal:
                graph.goal_nodes.add(n)
        _rebuild_queue(graph, reset_sink=True)


def _rebuild_queue(graph, reset_sink=False):
    graph.heap = []
    for n in graph.nodes.values():
        n.qkey = None
        graph.update_queue(n)
    G = graph.sink
    if reset_sink:
        G.g = INF
    graph.recompute_rhs(G)
    G.qkey = None
    graph.update_queue(G)


def _touching_edges(edges, obstacles, has_robots, time_origin):
    """Edges whose conservative boxes may meet any of ``obstacles`` during their time window."""
    if has_robots:
        return list(edges)
    if not obstacles or not edges:
        return []
    lo = np.array([e.succ.bbox[0] for e in edges])
    hi = np.array([e.succ.bbox[1] for e in edges])
    t0 = np.array([e.succ.prim.start.t for e in edges]) + time_origin
    t1 = t0 + np.array([e.succ.prim.dt for e in edges])
    hit = np.zeros(len(edges), bool)
    for lvp in obstacles:
        a = np.maximum(t0, lvp.active_from)
        b = np.minimum(t1, lvp.active_until)
        live = b >= a
        if not np.any(live):
            continue
        v0, vr = lvp._vert0, lvp._vert_rate
        pa = v0[None] + vr[None] * (a - lvp.active_from)[:, None, None]
        pb = v0[None] + vr[None] * (np.where(live, b, a) - lvp.active_from)[:, None, None]
        blo = np.minimum(pa.min(axis=1), pb.min(axis=1))
        bhi = np.maximum(pa.max(axis=1), pb.max(axis=1))
        hit |= live & np.all(lo <= bhi + 1e-9, axis=1) & np.all(blo <= hi + 1e-9, axis=1)
    return [e for e, h in zip(edges, hit) if h]


def update_edges(graph, workspace=None, obstacles=None, robots=None):
    """Re-evaluate cached edges after a map or obstacle change.

    Only edges whose samples touch changed cells (map change) or whose swept
    boxes meet an old or new obstacle (obstacle change) are re-checked.
    Returns the number of vertices made inconsistent by the change.
    """
    if graph.req is None:
        return 0
    req = graph.req
    affected = {}
    if workspace is not None and workspace is not req.workspace:
        old_ws = req.workspace
        req = req.with_(workspace=workspace)
        if old_ws is None:
            changed = range(int(np.prod(workspace.grid.dims)))
        else:
            changed = old_ws.changed_cells(workspace).tolist()
        for c in changed:
            for e in graph.cell_index.get(c, ()):
                if e.alive:
                    affected[id(e)] = e
        for e in affected.values():
            blocked, jc, _ = _static_eval(e.succ.prim.coeffs[None], req.spec.dt, workspace, req.n_samples)
            e.succ.static_blocked = bool(blocked[0])
            e.succ.jc = float(jc[0])
    if obstacles is not None or robots is not None:
        old_obs, old_rob = req.obstacles, req.robots
        new_obs = tuple(obstacles) if obstacles is not None else old_obs
        new_rob = tuple(robots) if robots is not None else old_rob
        req = req.with_(obstacles=new_obs, robots=new_rob)
        live = [e for e in graph.all_edges if e.alive]
        dyn = {id(e): e for e in _touching_edges(live, old_obs + new_obs, bool(old_rob + new_rob), req.time_origin)}
        for e in dyn.values():
            e.succ.dyn_blocked = False if e.succ.static_blocked else dynamic_blocked(e.succ.prim, e.succ.prim.start.t, req)
        affected.update(dyn)
        if req.goal_hold:
            for n in graph.nodes.values():
                if n.in_region:
                    was = n.goal
                    n.goal = is_goal(n.state, req)
                    if n.goal != was:
                        (graph.goal_nodes.add if n.goal else graph.goal_nodes.discard)(n)
    graph.req = req
    touched = set()
    for e in affected.values():
        c = e.succ.cost(req.rho_c)
        if c != e.cost:
            e.cost = c
            touched.add(e.dst)
    count = 0
    for n in touched:
        graph.recompute_rhs(n)
        graph.update_queue(n)
        count += n.g != n.rhs
    G = graph.sink
    graph.recompute_rhs(G)
    graph.update_queue(G)
    return count


def prune_graph(graph, new_start):
    """Move the graph's start to ``new_start`` and drop everything it cannot reach.

    Start-to-vertex costs are re-rooted by a shortest-path pass over the
    cached edges, without collision checks or heuristic calls. Every expanded
    vertex ends up consistent, so on an unchanged world the next LPA* pass
    expands nothing. An unknown start resets the graph.
    """
    if graph.lattice is None:
        return graph
    key = graph.lattice.key(new_start)
    if graph.start is not None and key == graph.start.key:
        return graph
    ns = graph.nodes.get(key)
    if ns is None:
        graph.reset()
        return graph
    # reachability over cached edges
    reach = {key: ns}
    stack = [ns]
    while stack:
        u = stack.pop()
        for e in u.succs or ():
            if e.alive and e.dst.key not in reach:
                reach[e.dst.key] = e.dst
                stack.append(e.dst)
    for k, n in graph.nodes.items():
        if k not in reach:
            for e in n.succs or ():
                e.alive = False
                graph.dead_edges += 1
    for n in reach.values():
        if len(n.preds):
            dead = [k for k, e in n.preds.items() if not e.alive or e.src.key not in reach]
            for k in dead:
                del n.preds[k]
    graph.nodes = reach
    graph.goal_nodes = {n for n in graph.goal_nodes if n.key in reach}
    # re-root: exact costs from the new start over the cached edges
    dist = {key: 0.0}
    heap = [(0.0, key, ns)]
    while heap:
        d, k, u = heapq.heappop(heap)
        if d > dist[k]:
            continue
        for e in u.succs or ():
            if not (e.alive and math.isfinite(e.cost)):
                continue
            nd = d + e.cost
            w = e.dst
            if nd < dist.get(w.key, INF):
                dist[w.key] = nd
                heapq.heappush(heap, (nd, w.key, w))
    # only vertices whose successors are cached may carry a finite g
    for k, n in reach.items():
        n.g = dist.get(k, INF) if n.succs is not None else INF
    graph.start = ns
    for n in reach.values():
        graph.recompute_rhs(n)
    # LPA* tolerates any g as long as rhs is derived from it; a consistent sink
    # means an unchanged world costs no re-expansion
    G = graph.sink
    graph.recompute_rhs(G)
    G.g = G.rhs
    if graph.req is not None:
        graph.req = graph.req.with_(start=ns.state)
    _rebuild_queue(graph)
    if graph.dead_edges > len(graph.all_edges) // 2:
        _compact(graph)
    return graph


def _compact(graph):
    graph.all_edges = [e for e in graph.all_edges if e.alive]
    idx = defaultdict(list)
    for e in graph.all_edges:
        for c in set(e.succ.cells.tolist()):
            idx[c].append(e)
    graph.cell_index = idx
    graph.dead_edges = 0
