"""Moving convex obstacles and exact primitive-vs-polytope intersection tests.

A convex polytope is ``{p | A p <= b}`` with one face normal per row of ``A``.
Along a polynomial segment every face function ``a_j . Phi(t) - b_j(t)`` is a
polynomial in ``t``, so the set of times at which the segment is inside the
polytope is a finite union of closed intervals whose left ends are either the
window start or a face root. Testing membership at the window ends and every
face root therefore decides intersection exactly (up to root tolerance).
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import kernels
from .poly import EverywhereZeroError, real_roots_in_interval

log = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-9


def _enumerate_vertices(A, b):
    """Brute-force vertex enumeration of ``{A x <= b}`` (small polytopes only)."""
    m = A.shape[1]
    verts = []
    pairs = []
    for combo in itertools.combinations(range(A.shape[0]), m):
        sub = A[list(combo)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        x = np.linalg.solve(sub, b[list(combo)])
        if np.all(A @ x <= b + 1e-9 * (1.0 + np.abs(b))):
            if not any(np.allclose(x, v, atol=1e-9) for v in verts):
                verts.append(x)
                pairs.append(combo)
    return np.array(verts).reshape(-1, m), pairs


@dataclass(frozen=True, eq=False)
class ConvexPolytope:
    A: np.ndarray  # (M, m) outward normals
    b: np.ndarray  # (M,)
    vertices: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.vertices is None:
            verts, _ = _enumerate_vertices(A, b)
            if verts.shape[0] == 0:
                raise ValueError("half-spaces do not bound a non-empty polytope")
            object.__setattr__(self, "vertices", verts)
        else:
            object.__setattr__(self, "vertices", np.atleast_2d(np.asarray(self.vertices, dtype=float)))

    @property
    def m(self):
        return self.A.shape[1]

    @classmethod
    def box(cls, center, half_extents):
        center = np.asarray(center, dtype=float)
        half = np.broadcast_to(np.asarray(half_extents, dtype=float), center.shape)
        m = center.shape[0]
        A = np.vstack([np.eye(m), -np.eye(m)])
        b = np.concatenate([center + half, -(center - half)])
        verts = np.array([center + np.array(s) * half for s in itertools.product((-1.0, 1.0), repeat=m)])
        return cls(A, b, verts)

    @classmethod
    def point(cls, p):
        p = np.asarray(p, dtype=float)
        return cls.box(p, np.zeros_like(p))

    @classmethod
    def from_vertices(cls, points):
        from scipy.spatial import ConvexHull

        pts = np.asarray(points, dtype=float)
        hull = ConvexHull(pts)
        eq = hull.equations  # normal . x + offset <= 0
        rows = []
        for e in eq:
            if not any(np.allclose(e, r, atol=1e-10) for r in rows):
                rows.append(e)
        eq = np.array(rows)
        return cls(eq[:, :-1], -eq[:, -1], pts[hull.vertices])

    def contains(self, p, tol=MEMBERSHIP_TOL):
        return bool(np.all(self.A @ np.asarray(p, dtype=float) <= self.b + tol))

    def support(self, a):
        return float(np.max(self.vertices @ np.asarray(a, dtype=float)))

    def is_symmetric(self, tol=1e-9):
        v = self.vertices
        return all(np.min(np.linalg.norm(v + x, axis=1)) <= tol for x in v)

    def translated(self, d):
        d = np.asarray(d, dtype=float)
        return ConvexPolytope(self.A, self.b + self.A @ d, self.vertices + d)

    def signed_clearance(self, p):
        """Max over faces of the normalized face value; > 0 outside, <= 0 inside."""
        norms = np.linalg.norm(self.A, axis=1)
        return float(np.max((self.A @ np.asarray(p, dtype=float) - self.b) / norms))


def minkowski_inflate(obstacle_shape, robot_shape):
    """Grow each obstacle face by the robot's support value along its normal.

    The robot shape must be centrally symmetric about its reference point.
    """
    if not robot_shape.is_symmetric():
        raise ValueError("robot shape must be symmetric about its reference point")
    h = np.array([robot_shape.support(a) for a in obstacle_shape.A])
    b = obstacle_shape.b + h
    verts, _ = _enumerate_vertices(obstacle_shape.A, b)
    return ConvexPolytope(obstacle_shape.A, b, verts)


@dataclass(frozen=True, eq=False)
class LinearVelocityPolyhedron:
    """Convex obstacle translating at ``v_c`` and inflating at ``v_e``.

    ``shape`` is the geometry at time ``active_from``, which is the epoch of the
    linear prediction; the obstacle exists on ``[active_from, active_until]``.
    """

    shape: ConvexPolytope
    v_c: np.ndarray
    v_e: float = 0.0
    active_from: float = 0.0
    active_until: float = math.inf
    rates: np.ndarray = field(init=False)
    _vert0: np.ndarray = field(init=False)
    _vert_rate: np.ndarray = field(init=False)

    def __post_init__(self):
        v_c = np.asarray(self.v_c, dtype=float).reshape(-1)
        object.__setattr__(self, "v_c", v_c)
        if self.v_e < 0:
            raise ValueError("v_e must be non-negative")
        if self.active_from > self.active_until:
            raise ValueError("active_from must not exceed active_until")
        A = self.shape.A
        rates = A @ v_c + np.linalg.norm(A, axis=1) * self.v_e
        object.__setattr__(self, "rates", rates)
        # vertices move affinely in time while the polytope only grows
        _, combos = _enumerate_vertices(A, self.shape.b)
        v0, vr = [], []
        for combo in combos:
            sub = A[list(combo)]
            v0.append(np.linalg.solve(sub, self.shape.b[list(combo)]))
            vr.append(np.linalg.solve(sub, rates[list(combo)]))
        object.__setattr__(self, "_vert0", np.array(v0))
        object.__setattr__(self, "_vert_rate", np.array(vr))

    def face_offsets(self, tau):
        return self.shape.b + self.rates * tau

    def polytope_at(self, tau):
        """Geometry at local time ``tau`` (seconds after ``active_from``)."""
        return ConvexPolytope(self.shape.A, self.face_offsets(tau), self._vert0 + self._vert_rate * tau)

    def swept_bbox(self, tau0, tau1):
        a = self._vert0 + self._vert_rate * tau0
        b = self._vert0 + self._vert_rate * tau1
        both = np.vstack([a, b])
        return both.min(axis=0), both.max(axis=0)


LVP = LinearVelocityPolyhedron


def face_offset_at(lvp, j, t):
    """``b_j(t) = b_j0 + (a_j . v_c + |a_j| v_e) t``."""
    if t < 0:
        raise ValueError("t must be non-negative")
    return float(lvp.shape.b[j] + lvp.rates[j] * t)


def _pad(c, n):
    if c.shape[-1] >= n:
        return c
    pad = np.zeros(c.shape[:-1] + (n - c.shape[-1],))
    return np.concatenate([c, pad], axis=-1)


def shift_coeffs(coeffs, s):
    """Coefficients of ``p(t + s)`` for every row of ``coeffs``."""
    n = coeffs.shape[-1]
    M = np.zeros((n, n))
    for i in range(n):
        for k in range(i + 1):
            M[i, k] = comb(i, k) * s ** (i - k)
    return coeffs @ M


def poly_bbox(coeffs, lo, hi):
    """Axis-wise [min, max] of the polynomials in ``coeffs`` (m, n) over [lo, hi]."""
    mins, maxs = [], []
    for c in coeffs:
        cand = [lo, hi]
        if c.shape[0] >= 3:
            d = np.arange(1, c.shape[0]) * c[1:]
            try:
                cand += real_roots_in_interval(d, lo, hi)
            except EverywhereZeroError:
                pass
        vals = np.polynomial.polynomial.polyval(np.array(cand), c)
        mins.append(vals.min())
        maxs.append(vals.max())
    return np.array(mins), np.array(maxs)


def _coeff_box(coeffs, lo, hi):
    """Cheap conservative box of polynomials ``(m, n)`` over [lo, hi] (re-centred at lo)."""
    c = shift_coeffs(coeffs, lo) if lo != 0.0 else coeffs
    w = hi - lo
    spread = np.sum(np.abs(c[:, 1:]) * w ** np.arange(1, c.shape[1]), axis=1)
    return c[:, 0] - spread, c[:, 0] + spread


def _boxes_overlap(lo1, hi1, lo2, hi2, margin=1e-9):
    return bool(np.all(lo1 <= hi2 + margin) and np.all(lo2 <= hi1 + margin))


def interval_hits(face_coeffs, lo, hi, tol=MEMBERSHIP_TOL):
    """True iff ``max_j f_j(t) <= tol`` for some ``t`` in ``[lo, hi]``.

    ``face_coeffs`` is (M, n): one polynomial per face in the segment's local time.
    Identically-zero faces are treated as always tight.
    """
    if hi < lo:
        return False
    cands = [lo, hi]
    owners = [-1, -1]
    live = []
    for j, c in enumerate(face_coeffs):
        try:
            roots = real_roots_in_interval(c, lo, hi)
        except EverywhereZeroError:
            continue
        if not roots:
            # no sign change: the face separates on the whole window if positive
            mid = np.polynomial.polynomial.polyval(0.5 * (lo + hi), c)
            f_lo = np.polynomial.polynomial.polyval(lo, c)
            if f_lo > tol and mid > tol:
                return False
        cands.extend(roots)
        owners.extend([len(live)] * len(roots))
        live.append(j)
    if not live:
        return True
    vals = kernels.eval_polys(face_coeffs[live], np.array(cands))
    # a face is tight at its own roots; bisection residue must not count against it
    cols = np.arange(len(cands))
    own = np.array(owners)
    sel = own >= 0
    vals[own[sel], cols[sel]] = np.minimum(vals[own[sel], cols[sel]], 0.0)
    return bool(np.any(np.all(vals <= tol, axis=0)))


def primitive_intersects_lvp(p, lvp, t_start):
    """Exact test of primitive ``p`` (starting at plan time ``t_start``) against ``lvp``."""
    lo = max(0.0, lvp.active_from - t_start)
    hi = min(p.dt, lvp.active_until - t_start)
    if hi < lo:
        return False
    tau0 = t_start - lvp.active_from
    blo, bhi = lvp.swept_bbox(tau0 + lo, tau0 + hi)
    plo, phi = poly_bbox(p.coeffs, lo, hi)
    if not _boxes_overlap(plo, phi, blo, bhi):
        return False
    A = lvp.shape.A
    F = A @ p.coeffs  # (M, q+1)
    F = _pad(F, max(F.shape[1], 2)).copy()
    F[:, 0] -= lvp.shape.b + lvp.rates * tau0
    F[:, 1] -= lvp.rates
    return interval_hits(F, lo, hi)


@dataclass(frozen=True, eq=False)
class RobotObstacle:
    """Another robot, modelled as ``geometry`` following ``traj``.

    ``geometry`` is already grown by the planning robot's own shape. Times are
    related by ``t_other = t_self + start_offset``. The other trajectory is
    trusted up to ``cutoff`` (its local time). With ``hold_after_end`` the
    robot stays at its final pose forever after its trajectory ends.
    """

    geometry: ConvexPolytope
    traj: object
    start_offset: float = 0.0
    cutoff: float = math.inf
    hold_after_end: bool = False

    def __post_init__(self):
        if self.start_offset < -1e-12:
            raise ValueError("start_offset must be non-negative")
        if self.cutoff > self.traj.T + 1e-12 and not math.isinf(self.cutoff):
            raise ValueError("cutoff exceeds trajectory duration")

    @classmethod
    def for_pair(cls, own_shape, other_shape, traj, start_offset=0.0, cutoff=math.inf, hold_after_end=False):
        if not math.isinf(cutoff):
            cutoff = min(cutoff, traj.T)
        return cls(minkowski_inflate(other_shape, own_shape), traj, start_offset, cutoff, hold_after_end)

    def horizon(self):
        return min(self.cutoff, self.traj.T)


def _static_face_coeffs(A, b, p_coeffs, pose):
    F = A @ p_coeffs
    F = F.copy()
    F[:, 0] -= b + A @ pose
    return F


def static_from(ro, complete_mode=True):
    """Local time after which the other robot is treated as parked there, or None if ignored.

    A finite cutoff ends trust in the shared plan: the robot is then ignored in
    complete mode and frozen at its cutoff pose otherwise. Without a cutoff a
    robot with ``hold_after_end`` stays at its final pose forever.
    """
    if not math.isinf(ro.cutoff):
        return None if complete_mode else ro.horizon()
    return ro.traj.T if ro.hold_after_end else None


def primitive_intersects_robot(p, ro, t_start, complete_mode=True):
    """Exact test of primitive ``p`` (plan time ``t_start``) against another robot."""
    A, b = ro.geometry.A, ro.geometry.b
    traj = ro.traj
    base = t_start + ro.start_offset  # other robot's local time at s = 0
    horizon = ro.horizon()
    n = p.coeffs.shape[1]
    glo, ghi = ro.geometry.vertices.min(axis=0), ro.geometry.vertices.max(axis=0)
    for k, seg in enumerate(traj.segments):
        k0, k1 = traj.knots[k], traj.knots[k + 1]
        a = max(k0, base)
        bb = min(k1, base + p.dt, horizon)
        if bb < a:
            continue
        other = shift_coeffs(seg.coeffs, base - k0)
        nn = max(n, other.shape[1])
        diff = _pad(p.coeffs, nn) - _pad(other, nn)
        lo, hi = a - base, bb - base
        dlo, dhi = _coeff_box(diff, lo, hi)
        if not _boxes_overlap(dlo, dhi, glo, ghi):
            continue
        F = A @ diff
        F[:, 0] -= b
        if interval_hits(F, lo, hi):
            return True
    t_static = static_from(ro, complete_mode)
    if t_static is not None:
        lo = max(0.0, t_static - base)
        if lo <= p.dt:
            if traj.segments:
                pose = traj.sample_positions([t_static], hold=True)[0]
            else:
                pose = traj.start.pos
            F = _static_face_coeffs(A, b, p.coeffs, pose)
            if interval_hits(F, lo, p.dt):
                return True
    return False


def stopping_cutoff(spec, T):
    """Trust horizon for a shared trajectory: ``min(v_max / a_max, T)``."""
    if spec.q != 2:
        log.warning("stopping cutoff is defined for second-order systems only; using full duration")
        return T
    if spec.v_max <= 0:
        return 0.0
    return min(spec.v_max / spec.a_max, T)
