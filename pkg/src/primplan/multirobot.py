"""Team planning on top of the single-robot search.

Other robots always enter a plan as :class:`RobotObstacle` records, so both
modes reduce to time-augmented A* with ``goal_hold`` on: a robot may only
finish where it can stay put while the others move on.
"""

import heapq
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import MotionPrimitive, State, Trajectory, primitive_coeffs
from .obstacles import ConvexPolytope, RobotObstacle, minkowski_inflate, stopping_cutoff
from .search import GoalRegion, Mode, PlanRequest, Status, plan_astar
from .validate import DENSE_STEP, polytope_clearance

log = logging.getLogger(__name__)

SEQUENTIAL = "sequential"
DECENTRALIZED = "decentralized"


@dataclass(eq=False)
class TeamRobot:
    id: int
    geometry: ConvexPolytope
    spec: object
    start: State
    goal: GoalRegion
    replan_period: float | None = None


@dataclass(eq=False)
class TeamScenario:
    robots: list
    workspace: object = None
    obstacles: tuple = ()
    mode: str = SEQUENTIAL
    rounds: int = 100
    rho_T: float = 1.0
    rho_c: float = 0.0
    T_max: float = 60.0
    max_expansions: int = 200_000

    def __post_init__(self):
        ids = [r.id for r in self.robots]
        if len(set(ids)) != len(ids):
            raise ValueError("robot ids must be unique")
        if self.mode not in (SEQUENTIAL, DECENTRALIZED):
            raise ValueError(f"unknown team mode {self.mode!r}")
        for i, a in enumerate(self.robots):
            for b in self.robots[i + 1 :]:
                grown = minkowski_inflate(b.geometry, a.geometry)
                if polytope_clearance(grown.A, grown.b, (a.start.pos - b.start.pos)[None])[0] <= 0:
                    raise ValueError(f"robots {a.id} and {b.id} overlap at their starts")
        if self.mode == DECENTRALIZED:
            for r in self.robots:
                if r.replan_period is not None and r.replan_period <= 0:
                    raise ValueError("replan periods must be positive")
                replan_period(r)

    def request(self, robot, start, robots=(), time_origin=0.0):
        return PlanRequest(
            robot.spec,
            start,
            robot.goal,
            rho_T=self.rho_T,
            rho_c=self.rho_c,
            mode=Mode.DYNAMIC,
            T_max=self.T_max,
            workspace=self.workspace,
            obstacles=self.obstacles,
            robots=tuple(robots),
            time_origin=time_origin,
            goal_hold=True,
            max_expansions=self.max_expansions,
        )


@dataclass(eq=False)
class RobotOutcome:
    id: int
    trajectory: Trajectory
    start_time: float
    status: Status
    reached: bool
    plan_time: float = 0.0
    expansions: int = 0
    replans: int = 0
    failed_ticks: int = 0
    cost: float = math.nan


@dataclass(eq=False)
class PairReport:
    min_clearance: dict = field(default_factory=dict)
    tol: float = 1e-6

    @property
    def ok(self):
        return all(c > -self.tol for c in self.min_clearance.values())

    @property
    def worst(self):
        return min(self.min_clearance.values(), default=math.inf)


@dataclass(eq=False)
class TeamResult:
    mode: str
    outcomes: list
    clearance: PairReport
    runtime: float
    ticks: int = 0

    @property
    def trajectories(self):
        return [o.trajectory for o in self.outcomes]

    @property
    def ok(self):
        return all(o.reached for o in self.outcomes) and self.clearance.ok


def hold_trajectory(state, duration, dt):
    """Stay at rest at ``state`` for ``duration`` (a multiple of ``dt``)."""
    n = int(round(duration / dt))
    segs = []
    m = state.pos.shape[0]
    rest = State(state.pos, np.zeros_like(state.derivs), state.yaw, state.t)
    for k in range(n):
        s = State(rest.pos, rest.derivs, rest.yaw, state.t + k * dt)
        coeffs = primitive_coeffs(s.stacked(), np.zeros(m))
        e = State(rest.pos, rest.derivs, rest.yaw, state.t + (k + 1) * dt)
        segs.append(MotionPrimitive(s, np.zeros(m), 0.0, dt, coeffs, e))
    return segs


def _reached(robot, traj):
    end = traj.end_state
    return robot.goal.contains(end) and np.allclose(end.derivs, 0.0, atol=1e-9)


# --------------------------------------------------------------------------
# sequential
# --------------------------------------------------------------------------


def plan_sequential(sc):
    """Plan robots in list order; robot ``i`` avoids the committed plans of ``0..i-1``."""
    t0 = time.perf_counter()
    outcomes = []
    for i, rb in enumerate(sc.robots):
        others = []
        for o, prev in zip(outcomes, sc.robots[:i]):
            others.append(RobotObstacle.for_pair(rb.geometry, prev.geometry, o.trajectory, 0.0, math.inf, True))
        # lower-priority robots still wait at their starts
        start = State(rb.start.pos, rb.start.derivs, rb.start.yaw, 0.0)
        res = plan_astar(sc.request(rb, start, others))
        if res.ok:
            traj = res.trajectory
        else:
            log.warning("robot %s: %s", rb.id, res.status.value)
            traj = Trajectory([], start=start)
        outcomes.append(
            RobotOutcome(rb.id, traj, 0.0, res.status, res.ok and _reached(rb, traj), res.runtime, res.expansions, 1,
                         0 if res.ok else 1, res.total_cost)
        )
    report = verify_pairwise([o.trajectory for o in outcomes], [r.geometry for r in sc.robots],
                             [0.0] * len(outcomes))
    return TeamResult(SEQUENTIAL, outcomes, report, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# decentralized
# --------------------------------------------------------------------------


@dataclass(eq=False)
class _Live:
    robot: TeamRobot
    traj: Trajectory  # committed plan, local time 0 at ``start``
    start: float
    executed: list
    done: bool = False
    last_ok: bool = True
    out: RobotOutcome = None


def _default_period(robot):
    """Largest multiple of dt not above half the stopping cutoff (at least dt)."""
    spec = robot.spec
    tc = stopping_cutoff(spec, math.inf)
    if math.isinf(tc):
        return spec.dt
    k = max(1, int(math.floor(0.5 * tc / spec.dt + 1e-9)))
    return k * spec.dt


def replan_period(robot):
    p = robot.replan_period if robot.replan_period is not None else _default_period(robot)
    k = max(1, int(round(p / robot.spec.dt)))
    p = k * robot.spec.dt
    tc = stopping_cutoff(robot.spec, math.inf)
    if p >= tc - 1e-9:
        # others would see an empty trust window on this robot's plan right before it replans
        raise ValueError(f"robot {robot.id}: replan period {p} must be shorter than the cutoff {tc}")
    return p


def _state_on(live, tau):
    """State on the committed plan at global time ``tau`` (held at rest past its end)."""
    local = tau - live.start
    traj = live.traj
    k = int(round(local / live.robot.spec.dt))
    if k >= len(traj.segments):
        end = traj.end_state
        return State(end.pos, end.derivs, end.yaw, 0.0)
    s = traj.segments[k].start if k < len(traj.segments) else traj.end_state
    return State(s.pos, s.derivs, s.yaw, 0.0)


def _prefix(live, tau):
    """Executed primitives of the committed plan from its start up to ``tau``."""
    dt = live.robot.spec.dt
    k = int(round((tau - live.start) / dt))
    segs = list(live.traj.segments[:k])
    if k > len(live.traj.segments):
        segs += hold_trajectory(live.traj.end_state, (k - len(live.traj.segments)) * dt, dt)
    return segs


def plan_decentralized(sc):
    """Discrete-event simulation of asynchronous replanning on a global clock.

    Each robot replans every ``replan_period`` seconds against the others'
    latest shared plans, trusting each only up to its stopping cutoff.
    Ticks falling at the same instant run in id order, each seeing the
    commits made before it.
    """
    t0 = time.perf_counter()
    lives = []
    for rb in sc.robots:
        start = State(rb.start.pos, rb.start.derivs, rb.start.yaw, 0.0)
        out = RobotOutcome(rb.id, None, 0.0, Status.NO_PATH, False)
        lives.append(_Live(rb, Trajectory([], start=start), 0.0, [], out=out))
    periods = [replan_period(rb) for rb in sc.robots]
    events = sorted((0.0, i) for i in range(len(lives)))
    ticks = 0
    max_ticks = sc.rounds * len(lives)
    heapq.heapify(events)
    while events and ticks < max_ticks:
        tau, i = heapq.heappop(events)
        me = lives[i]
        if all(lv.done for lv in lives):
            break
        if me.done:
            continue
        ticks += 1
        cur = _state_on(me, tau)
        if _reached(me.robot, Trajectory([], start=cur)) and tau >= me.start + me.traj.T - 1e-9:
            me.executed += _prefix(me, tau)
            me.traj = Trajectory([], start=State(cur.pos, cur.derivs, cur.yaw, 0.0))
            me.start = tau
            me.done = True
            continue
        others = []
        for j, lv in enumerate(lives):
            if j == i:
                continue
            offset = tau - lv.start
            if offset < -1e-9:
                raise AssertionError("negative start offset")
            offset = max(offset, 0.0)
            traj = lv.traj
            if lv.done or not lv.last_ok:
                cutoff = math.inf  # a robot that will not replan is trusted, and held, forever
            else:
                tc = stopping_cutoff(lv.robot.spec, math.inf)
                # within the trust window a plan that has ended means standing still
                pad = offset + tc - traj.T
                if pad > 0:
                    dt = lv.robot.spec.dt
                    hold = hold_trajectory(traj.end_state, math.ceil(pad / dt - 1e-9) * dt, dt)
                    traj = Trajectory(list(traj.segments) + hold, start=traj.start)
                cutoff = stopping_cutoff(lv.robot.spec, traj.T)
            others.append(RobotObstacle.for_pair(me.robot.geometry, lv.robot.geometry, traj, offset, cutoff, True))
        res = plan_astar(sc.request(me.robot, cur, others, time_origin=tau))
        me.out.plan_time += res.runtime
        me.out.expansions += res.expansions
        me.out.replans += 1
        if res.ok:
            me.executed += _prefix(me, tau)
            me.traj = res.trajectory
            me.start = tau
            me.last_ok = True
            me.out.status = Status.SUCCESS
        else:
            me.out.failed_ticks += 1
            me.last_ok = False
            log.info("robot %s tick %.3f: %s", me.robot.id, tau, res.status.value)
        heapq.heappush(events, (tau + periods[i], i))
    outcomes = []
    for lv in lives:
        segs = lv.executed + list(lv.traj.segments)
        first = lv.robot.start
        traj = _retime(segs, State(first.pos, first.derivs, first.yaw, 0.0))
        lv.out.trajectory = traj
        lv.out.reached = _reached(lv.robot, traj)
        outcomes.append(lv.out)
    report = verify_pairwise([o.trajectory for o in outcomes], [r.geometry for r in sc.robots],
                             [0.0] * len(outcomes))
    return TeamResult(DECENTRALIZED, outcomes, report, time.perf_counter() - t0, ticks)


def _retime(segs, start):
    """Stamp segments with global times from 0 so the log reads as one trajectory."""
    out = []
    t = 0.0
    for s in segs:
        a = State(s.start.pos, s.start.derivs, s.start.yaw, t)
        b = State(s.end.pos, s.end.derivs, s.end.yaw, t + s.dt)
        out.append(MotionPrimitive(a, s.u, s.u_psi, s.dt, s.coeffs, b))
        t += s.dt
    return Trajectory(out, start=start)


def plan_team(sc):
    return plan_sequential(sc) if sc.mode == SEQUENTIAL else plan_decentralized(sc)


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------


def verify_pairwise(trajectories, geometries, offsets=None, step=DENSE_STEP, tol=1e-6):
    """Dense check of the pairwise Minkowski condition on the global clock.

    Trajectory ``i`` starts at global time ``offsets[i]``; before its start and
    after its end a robot sits at its first or last pose.
    """
    n = len(trajectories)
    offsets = [0.0] * n if offsets is None else list(offsets)
    rep = PairReport(tol=tol)
    for i in range(n):
        for j in range(i + 1, n):
            a, b = trajectories[i], trajectories[j]
            lo = min(offsets[i], offsets[j])
            hi = max(offsets[i] + a.T, offsets[j] + b.T)
            k = max(2, int(math.ceil((hi - lo) / step)) + 1)
            ts = np.linspace(lo, hi, k)
            pa = a.sample_positions(ts - offsets[i], hold=True)
            pb = b.sample_positions(ts - offsets[j], hold=True)
            grown = minkowski_inflate(geometries[j], geometries[i])
            rep.min_clearance[(i, j)] = float(np.min(polytope_clearance(grown.A, grown.b, pa - pb)))
    return rep
