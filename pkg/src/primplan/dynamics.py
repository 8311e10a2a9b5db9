"""Chain-of-integrators model used to build motion primitives.

Each spatial axis is an independent integrator chain of order ``q``; a
primitive applies one constant control ``u`` (the ``q``-th derivative) for a
fixed duration, so every axis becomes a degree-``q`` polynomial. Yaw is a
separate first-order channel driven by a constant yaw rate.
"""

import bisect
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .poly import Polynomial, real_roots_in_interval

BOUND_TOL = 1e-9


def wrap_angle(a):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(a) == 0:
        r = math.remainder(float(a), 2.0 * math.pi)
        return math.pi if r <= -math.pi else r
    r = np.remainder(np.asarray(a, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    return np.where(r <= -math.pi, math.pi, r)


@dataclass(frozen=True)
class SystemSpec:
    m: int
    q: int
    u_max: float
    du: int
    dt: float
    v_max: float
    a_max: float
    j_max: float | None = None
    yaw_enabled: bool = False
    u_psi_max: float = 0.0
    du_psi: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if not (self.u_max > 0 and self.dt > 0):
            raise ValueError("u_max and dt must be positive")
        if self.du < 3 or self.du % 2 == 0:
            raise ValueError("du must be odd and >= 3")
        if any(b is None or b <= 0 for b in self.derivative_bounds):
            raise ValueError("derivative bounds must be positive")
        if self.yaw_enabled:
            if self.du_psi < 1 or self.du_psi % 2 == 0:
                raise ValueError("du_psi must be odd")
            if self.du_psi > 1 and self.u_psi_max <= 0:
                raise ValueError("u_psi_max must be positive")

    @property
    def derivative_bounds(self):
        """Per-axis bounds on derivative orders 1..q-1."""
        return tuple([self.v_max, self.a_max, self.j_max][: self.q - 1])

    @property
    def u_step(self):
        return 2.0 * self.u_max / (self.du - 1)

    @property
    def u_psi_step(self):
        if not self.yaw_enabled or self.du_psi == 1:
            return 0.0
        return 2.0 * self.u_psi_max / (self.du_psi - 1)

    @cached_property
    def controls(self):
        return generate_control_set(self)


@dataclass(frozen=True, eq=False)
class State:
    pos: np.ndarray
    derivs: np.ndarray  # shape (q-1, m): velocity, acceleration, ...
    yaw: float | None = None
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float).reshape(-1))
        d = np.asarray(self.derivs, dtype=float)
        object.__setattr__(self, "derivs", d.reshape(-1, self.pos.shape[0]) if d.size else d.reshape(0, self.pos.shape[0]))
        if self.yaw is not None:
            object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @classmethod
    def at_rest(cls, pos, spec, yaw=None, t=0.0, vel=None):
        derivs = np.zeros((spec.q - 1, spec.m))
        if vel is not None and spec.q >= 2:
            derivs[0] = vel
        if spec.yaw_enabled and yaw is None:
            yaw = 0.0
        return cls(np.asarray(pos, dtype=float), derivs, yaw if spec.yaw_enabled else None, t)

    @property
    def vel(self):
        return self.derivs[0] if len(self.derivs) else np.zeros_like(self.pos)

    def stacked(self):
        """Position and derivatives as a ``(q, m)`` array."""
        return np.vstack([self.pos[None, :], self.derivs])

    def __repr__(self):
        return f"State(pos={self.pos.tolist()}, derivs={self.derivs.tolist()}, yaw={self.yaw}, t={self.t})"


_FACT = [math.factorial(i) for i in range(12)]


def _derivative_coeffs(coeffs, order):
    """Coefficients (last axis) of the ``order``-th time derivative."""
    n = coeffs.shape[-1]
    if order >= n:
        return np.zeros(coeffs.shape[:-1] + (1,))
    i = np.arange(order, n)
    fac = np.array([_FACT[k] / _FACT[k - order] for k in i])
    return coeffs[..., order:] * fac


@dataclass(frozen=True, eq=False)
class MotionPrimitive:
    start: State
    u: np.ndarray
    u_psi: float
    dt: float
    coeffs: np.ndarray  # (m, q+1), lowest degree first
    end: State

    @property
    def axis_polys(self):
        return [Polynomial(c) for c in self.coeffs]

    @property
    def q(self):
        return self.coeffs.shape[1] - 1

    def derivative_at(self, order, ts):
        """``order``-th derivative of every axis at local times ``ts``; shape (len(ts), m)."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return kernels.eval_polys(_derivative_coeffs(self.coeffs, order), ts).T

    def positions(self, ts):
        return self.derivative_at(0, ts)

    def velocities(self, ts):
        return self.derivative_at(1, ts)

    def yaw_at(self, ts):
        if self.start.yaw is None:
            return None
        return wrap_angle(self.start.yaw + self.u_psi * np.asarray(ts, dtype=float))


def generate_control_set(spec):
    """Return ``(U, U_psi)``: the ``(N, m)`` spatial controls and their ``(N,)`` yaw rates.

    Ordering is lexicographic over axes with yaw innermost; index order is the
    deterministic tie-break order used by the search.
    """
    vals = np.linspace(-spec.u_max, spec.u_max, spec.du)
    vals[spec.du // 2] = 0.0
    spatial = list(itertools.product(vals, repeat=spec.m))
    if spec.yaw_enabled and spec.du_psi > 1:
        yaw_vals = np.linspace(-spec.u_psi_max, spec.u_psi_max, spec.du_psi)
        yaw_vals[spec.du_psi // 2] = 0.0
    else:
        yaw_vals = np.zeros(1)
    combos = [(u, w) for u in spatial for w in yaw_vals]
    U = np.array([c[0] for c in combos], dtype=float).reshape(len(combos), spec.m)
    W = np.array([c[1] for c in combos], dtype=float)
    return U, W


def primitive_coeffs(stacked, u, dt_unused=None):
    """Axis polynomial coefficients for a state ``(q, m)`` and controls ``(..., m)``.

    Returns an array ``(..., m, q+1)``.
    """
    q, m = stacked.shape
    base = (stacked / np.array(_FACT[:q])[:, None]).T  # (m, q)
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape[:-1] + (m, q + 1))
    out[..., :q] = base
    out[..., q] = u / _FACT[q]
    return out


def end_derivatives(coeffs, dt, q):
    """Position and derivatives 0..q-1 of the polynomials at ``dt``; shape (..., q, m)."""
    n = coeffs.shape[-1]
    powers = dt ** np.arange(n)
    out = []
    for r in range(q):
        i = np.arange(r, n)
        fac = np.array([_FACT[k] / _FACT[k - r] for k in i])
        out.append(np.sum(coeffs[..., r:] * fac * powers[: n - r], axis=-1))
    return np.stack(out, axis=-2)


def propagate(s, u, u_psi, dt):
    """Apply constant control ``u`` (and yaw rate ``u_psi``) to ``s`` for ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = np.asarray(u, dtype=float).reshape(-1)
    stacked = s.stacked()
    q = stacked.shape[0]
    coeffs = primitive_coeffs(stacked, u)
    ends = end_derivatives(coeffs, dt, q)
    yaw = None
    if s.yaw is not None:
        yaw = wrap_angle(s.yaw + (u_psi or 0.0) * dt)
    end = State(ends[0], ends[1:], yaw, s.t + dt)
    return MotionPrimitive(s, u, float(u_psi or 0.0), float(dt), coeffs, end)


def primitive_cost(p, rho_T):
    """Control effort plus time penalty of one primitive: ``|u|^2 dt + rho_T dt``."""
    return float(np.dot(p.u, p.u)) * p.dt + rho_T * p.dt


def _order_within(poly_coeffs, dt, bound):
    # max |p(t)| on [0, dt] via endpoints and critical points
    p = Polynomial(poly_coeffs)
    cand = [0.0, dt]
    if p.degree >= 2:
        cand += real_roots_in_interval(p.derivative(), 0.0, dt)
    return max(abs(p(t)) for t in cand) <= bound + BOUND_TOL


def check_dynamic_feasibility(p, spec):
    """True iff every derivative order 1..q-1 stays within its bound on ``[0, dt]``."""
    if spec.yaw_enabled and abs(p.u_psi) > spec.u_psi_max + BOUND_TOL:
        return False
    for order, bound in enumerate(spec.derivative_bounds, start=1):
        dc = _derivative_coeffs(p.coeffs, order)
        for axis in range(dc.shape[0]):
            if not _order_within(dc[axis], p.dt, bound):
                return False
    return True


def feasible_mask(coeffs, dt, spec):
    """Vectorized :func:`check_dynamic_feasibility` over ``coeffs`` of shape (n, m, q+1).

    Yaw-rate bounds are not checked here; generated controls respect them.
    """
    ok = np.ones(coeffs.shape[0], dtype=bool)
    for order, bound in enumerate(spec.derivative_bounds, start=1):
        dc = _derivative_coeffs(coeffs, order)  # (n, m, deg+1)
        deg = dc.shape[-1] - 1
        lim = bound + BOUND_TOL
        ok &= np.all(np.abs(dc[..., 0]) <= lim, axis=1)
        end = np.sum(dc * dt ** np.arange(deg + 1), axis=-1)
        ok &= np.all(np.abs(end) <= lim, axis=1)
        if deg == 2:
            a, b = dc[..., 2], dc[..., 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                ts = np.where(a != 0.0, -b / (2.0 * a), -1.0)
            inside = (ts > 0.0) & (ts < dt)
            val = dc[..., 0] + b * ts + a * ts * ts
            ok &= ~np.any(inside & (np.abs(val) > lim), axis=1)
        elif deg > 2:
            for i in np.flatnonzero(ok):
                ok[i] = all(_order_within(dc[i, k], dt, bound) for k in range(dc.shape[1]))
    return ok


@dataclass(eq=False)
class Trajectory:
    """Piecewise polynomial trajectory; local time runs over ``[0, T]``.

    ``start`` is kept so an empty trajectory still knows where it is.
    """

    segments: list
    start: State | None = None
    knots: list = field(init=False)

    def __post_init__(self):
        self.segments = list(self.segments)
        if self.start is None:
            if not self.segments:
                raise ValueError("empty trajectory needs a start state")
            self.start = self.segments[0].start
        knots = [0.0]
        for seg in self.segments:
            knots.append(knots[-1] + seg.dt)
        self.knots = knots

    @property
    def T(self):
        return self.knots[-1]

    @property
    def t0(self):
        """Time stamp of the first state (plan-clock time of local ``t = 0``)."""
        return self.start.t

    @property
    def end_state(self):
        return self.segments[-1].end if self.segments else self.start

    def locate(self, t):
        if t < -1e-12 or t > self.T + 1e-12:
            raise ValueError(f"t={t} outside trajectory domain [0, {self.T}]")
        if not self.segments:
            return -1, 0.0
        i = bisect.bisect_right(self.knots, t) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return i, min(max(t - self.knots[i], 0.0), self.segments[i].dt)

    def sample_positions(self, ts, hold=False):
        """Positions at local times ``ts`` (vectorized). With ``hold`` the end pose is held past ``T``."""
        ts = np.asarray(ts, dtype=float)
        out = np.empty((ts.shape[0], self.start.pos.shape[0]))
        if not self.segments:
            out[:] = self.start.pos
            return out
        if hold:
            ts = np.clip(ts, 0.0, self.T)
        idx = np.clip(np.searchsorted(self.knots, ts, side="right") - 1, 0, len(self.segments) - 1)
        for i in np.unique(idx):
            sel = idx == i
            out[sel] = self.segments[i].positions(ts[sel] - self.knots[i])
        return out


def evaluate_trajectory(traj, t):
    """Return ``(pos, derivs, yaw)`` of ``traj`` at local time ``t``."""
    i, tau = traj.locate(t)
    if i < 0:
        s = traj.start
        return s.pos.copy(), s.derivs.copy(), s.yaw
    seg = traj.segments[i]
    q = seg.q
    vals = np.stack([seg.derivative_at(r, [tau])[0] for r in range(q)])
    yaw = None if seg.start.yaw is None else float(seg.yaw_at(tau))
    return vals[0], vals[1:], yaw


def state_at(traj, t):
    """State on ``traj`` at local time ``t`` with its plan-clock time stamp."""
    pos, derivs, yaw = evaluate_trajectory(traj, t)
    return State(pos, derivs, yaw, traj.t0 + t)


def check_continuity(traj, tol=1e-9):
    """True iff consecutive segments join in position, every derivative, yaw and time."""
    for a, b in zip(traj.segments, traj.segments[1:]):
        if not np.allclose(a.end.stacked(), b.start.stacked(), atol=tol, rtol=0):
            return False
        if abs(a.end.t - b.start.t) > tol:
            return False
        if a.end.yaw is not None and abs(wrap_angle(a.end.yaw - b.start.yaw)) > tol:
            return False
    return True
