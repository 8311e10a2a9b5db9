"""Dense-sampling re-validation of planned trajectories.

Deliberately independent of the planner's checks: no root finding, no
lattice, just many samples and brute-force geometry.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import wrap_angle
from .env import OCCUPIED

DENSE_STEP = 1e-3
CLEARANCE_TOL = 1e-6


def dense_times(T, step=DENSE_STEP):
    if T <= 0:
        return np.zeros(1)
    n = max(2, int(math.ceil(T / step)) + 1)
    return np.linspace(0.0, T, n)


def sample_derivative(traj, order, ts):
    """Order-``order`` derivative of ``traj`` at local times ``ts``."""
    ts = np.asarray(ts, dtype=float)
    m = traj.start.pos.shape[0]
    out = np.zeros((ts.shape[0], m))
    if not traj.segments:
        st = traj.start.stacked()
        if order < st.shape[0]:
            out[:] = st[order]
        return out
    idx = np.clip(np.searchsorted(traj.knots, ts, side="right") - 1, 0, len(traj.segments) - 1)
    for i in np.unique(idx):
        sel = idx == i
        out[sel] = traj.segments[i].derivative_at(order, ts[sel] - traj.knots[i])
    return out


def sample_yaw(traj, ts):
    idx = np.clip(np.searchsorted(traj.knots, ts, side="right") - 1, 0, max(len(traj.segments) - 1, 0))
    out = np.empty(len(ts))
    for i in np.unique(idx):
        sel = idx == i
        seg = traj.segments[i]
        out[sel] = seg.yaw_at(ts[sel] - traj.knots[i])
    return out


def polytope_clearance(A, b, points):
    """Signed clearance ``max_j (a_j . p - b_j) / |a_j|`` for each point (negative inside).

    ``b`` may be (M,) or per-point (k, M).
    """
    norms = np.linalg.norm(A, axis=1)
    return np.max((points @ A.T - b) / norms, axis=1)


def lvp_clearance(lvp, points, t_abs):
    """Clearance of ``points`` from ``lvp`` at absolute times ``t_abs``; +inf when inactive."""
    t_abs = np.asarray(t_abs, dtype=float)
    active = (t_abs >= lvp.active_from - 1e-12) & (t_abs <= lvp.active_until + 1e-12)
    tau = np.clip(t_abs - lvp.active_from, 0.0, None)
    b = lvp.shape.b[None, :] + lvp.rates[None, :] * tau[:, None]
    c = polytope_clearance(lvp.shape.A, b, points)
    return np.where(active, c, np.inf)


def robot_pose(ro, t_other, complete_mode=True):
    """Positions of another robot at its local times; rows of NaN where it is ignored."""
    t_other = np.asarray(t_other, dtype=float)
    traj = ro.traj
    T = traj.T
    horizon = min(ro.cutoff, T)
    pos = traj.sample_positions(np.clip(t_other, 0.0, T), hold=True)
    out = np.full_like(pos, np.nan)
    live = (t_other >= -1e-12) & (t_other <= horizon + 1e-12)
    out[live] = pos[live]
    beyond = t_other > horizon + 1e-12
    if not math.isinf(ro.cutoff):
        if not complete_mode:
            out[beyond] = traj.sample_positions([horizon], hold=True)[0]
    elif ro.hold_after_end:
        out[beyond] = traj.sample_positions([T], hold=True)[0]
    return out


def robot_clearance(ro, points, t_self, complete_mode=True):
    poses = robot_pose(ro, np.asarray(t_self) + ro.start_offset, complete_mode)
    ok = ~np.isnan(poses[:, 0])
    out = np.full(points.shape[0], np.inf)
    if np.any(ok):
        out[ok] = polytope_clearance(ro.geometry.A, ro.geometry.b, points[ok] - poses[ok])
    return out


def static_penetration(ws, points):
    """Depth of each point inside the occupied set (0 for points in free cells).

    Depth is the distance to the nearest non-occupied cell box, found by brute
    force over a neighbourhood. Out-of-bounds points count as occupied in a
    bounded workspace.
    """
    grid = ws.grid
    r = grid.resolution
    dims = np.array(grid.dims)
    occ = grid.cells == OCCUPIED
    depth = np.zeros(points.shape[0])
    idx = np.floor((points - grid.origin) / r).astype(int)
    inside = np.all((idx >= 0) & (idx < dims), axis=1)
    flagged = np.zeros(points.shape[0], bool)
    flagged[inside] = occ[tuple(idx[inside].T)]
    if ws.bounded:
        flagged |= ~inside
    reach = 4
    for i in np.flatnonzero(flagged):
        p = points[i]
        best = np.inf
        c = idx[i]
        rng = [np.arange(c[k] - reach, c[k] + reach + 1) for k in range(grid.m)]
        mesh = np.stack(np.meshgrid(*rng, indexing="ij"), axis=-1).reshape(-1, grid.m)
        ok = np.all((mesh >= 0) & (mesh < dims), axis=1)
        free = mesh[ok][~occ[tuple(mesh[ok].T)]]
        if free.size:
            lo = grid.origin + free * r
            gap = np.maximum(np.maximum(lo - p, p - (lo + r)), 0.0)
            best = float(np.min(np.linalg.norm(gap, axis=1)))
        depth[i] = best
    return depth


@dataclass
class Report:
    violations: list = field(default_factory=list)
    min_obstacle_clearance: float = math.inf
    min_robot_clearance: float = math.inf
    max_penetration: float = 0.0

    @property
    def ok(self):
        return not self.violations


def sampling_slack(req):
    """Largest depth a point-sampled static check can miss: half the sample spacing."""
    n = req.n_samples
    return 0.5 * req.spec.v_max * req.spec.dt / (2 * n - 1)


def validate_plan(traj, req, step=DENSE_STEP):
    """Re-check every constraint of ``req`` on ``traj`` by dense sampling."""
    rep = Report()
    spec = req.spec
    ts = dense_times(traj.T, step)
    pos = traj.sample_positions(ts)
    t_plan = traj.t0 + ts
    for r, bound in enumerate(spec.derivative_bounds, start=1):
        d = sample_derivative(traj, r, ts)
        if np.max(np.abs(d), initial=0.0) > bound + 1e-6:
            rep.violations.append(f"derivative {r} exceeds {bound}")
    end = traj.end_state
    if not req.goal.contains(end):
        rep.violations.append("end state outside goal region")
    if req.workspace is not None:
        depth = static_penetration(req.workspace, pos)
        rep.max_penetration = float(depth.max(initial=0.0))
        if rep.max_penetration > sampling_slack(req) + 1e-9:
            rep.violations.append(f"static penetration {rep.max_penetration:.4g}")
    if req.tunnel is not None and not math.isinf(req.tunnel.r):
        slack = req.spec.v_max * req.spec.dt / (req.n_samples - 1) / 2
        d = _polyline_distance(pos, req.tunnel.ref_polyline)
        if np.max(d) > req.tunnel.r + slack + 1e-9:
            rep.violations.append("tunnel left")
    if req.theta < 2 * math.pi and traj.segments and traj.start.yaw is not None:
        v = sample_derivative(traj, 1, ts)
        speed = np.hypot(v[:, 0], v[:, 1])
        live = speed >= req.eps_v
        diff = wrap_angle(sample_yaw(traj, ts[live]) - np.arctan2(v[live, 1], v[live, 0]))
        if np.any(np.abs(diff) > 0.5 * req.theta + 1e-7):
            rep.violations.append("field of view violated")
    for lvp in req.obstacles:
        c = float(np.min(lvp_clearance(lvp, pos, req.time_origin + t_plan)))
        rep.min_obstacle_clearance = min(rep.min_obstacle_clearance, c)
    if rep.min_obstacle_clearance < -CLEARANCE_TOL:
        rep.violations.append(f"moving obstacle hit (clearance {rep.min_obstacle_clearance:.3g})")
    for ro in req.robots:
        c = float(np.min(robot_clearance(ro, pos, t_plan, req.complete_mode)))
        rep.min_robot_clearance = min(rep.min_robot_clearance, c)
    if rep.min_robot_clearance < -CLEARANCE_TOL:
        rep.violations.append(f"robot hit (clearance {rep.min_robot_clearance:.3g})")
    if req.mode.value == "dynamic" and traj.t0 + traj.T > req.T_max + 1e-9:
        rep.violations.append("horizon exceeded")
    return rep


def _polyline_distance(points, verts):
    if len(verts) == 1:
        return np.linalg.norm(points - verts[0], axis=1)
    a, b = verts[:-1], verts[1:]
    ab = b - a
    L2 = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
    ap = points[:, None, :] - a[None]
    t = np.clip(np.sum(ap * ab[None], axis=2) / L2, 0.0, 1.0)
    proj = a[None] + t[..., None] * ab[None]
    return np.min(np.linalg.norm(points[:, None, :] - proj, axis=2), axis=1)
