"""Scenario files, trajectory CSVs and stats JSON."""

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import State, SystemSpec, Trajectory, propagate
from .env import OCCUPIED, UNKNOWN, OccupancyGrid, Workspace, load_grid
from .obstacles import LVP, ConvexPolytope
from .search import GoalRegion, Mode, PlanRequest


class ScenarioError(ValueError):
    pass


# --------------------------------------------------------------------------
# atomic writes
# --------------------------------------------------------------------------


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _finite(x):
    """JSON has no infinities; encode them as null."""
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


# --------------------------------------------------------------------------
# trajectory CSV
# --------------------------------------------------------------------------


def csv_header(m, q, yaw):
    cols = ["t"] + [f"p{k}" for k in range(m)]
    for r in range(1, q):
        cols += [f"d{r}_{k}" for k in range(m)]
    cols += ["yaw", "segment_index"] + [f"u{k}" for k in range(m)] + ["u_yaw"]
    return cols


def trajectory_rows(traj, samples_per_segment=10):
    """Dense rows; every segment contributes its start row, the last row is the end state."""
    m = traj.start.pos.shape[0]
    rows = []

    def row(t, stacked, yaw, k, u, uy):
        vals = [t] + list(stacked.ravel())
        vals += [yaw if yaw is not None else "", k] + list(u) + [uy]
        return vals

    if not traj.segments:
        s = traj.start
        rows.append(row(s.t, s.stacked(), s.yaw, -1, np.zeros(m), 0.0))
        return rows
    for k, seg in enumerate(traj.segments):
        taus = np.linspace(0.0, seg.dt, samples_per_segment, endpoint=False)
        q = seg.q
        vals = np.stack([seg.derivative_at(r, taus) for r in range(q)], axis=1)  # (n, q, m)
        vals[0] = seg.start.stacked()
        yaws = seg.yaw_at(taus) if seg.start.yaw is not None else [None] * len(taus)
        for i, tau in enumerate(taus):
            t = seg.start.t if i == 0 else seg.start.t + float(tau)
            rows.append(row(t, vals[i], None if yaws[i] is None else float(yaws[i]), k, seg.u, seg.u_psi))
    last = traj.segments[-1]
    e = last.end
    rows.append(row(e.t, e.stacked(), e.yaw, len(traj.segments) - 1, last.u, last.u_psi))
    return rows


def trajectory_csv_text(traj, samples_per_segment=10):
    import io as _io

    m = traj.start.pos.shape[0]
    q = traj.start.stacked().shape[0]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(m, q, traj.start.yaw is not None))
    for r in trajectory_rows(traj, samples_per_segment):
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def write_trajectory_csv(path, traj, samples_per_segment=10):
    atomic_write_text(path, trajectory_csv_text(traj, samples_per_segment))


def read_trajectory_csv(path):
    """Rebuild a trajectory from a CSV written by :func:`write_trajectory_csv`.

    The first row of each segment carries its start state and control; the
    segment is re-propagated from there, so the reload is exact.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    m = sum(1 for c in header if c.startswith("p") and c[1:].isdigit())
    q = 1 + sum(1 for c in header if c.startswith("d") and c.endswith("_0"))
    col = {c: i for i, c in enumerate(header)}

    def state(r):
        t = float(r[col["t"]])
        pos = [float(r[col[f"p{k}"]]) for k in range(m)]
        derivs = [[float(r[col[f"d{o}_{k}"]]) for k in range(m)] for o in range(1, q)]
        yaw = r[col["yaw"]]
        return State(pos, np.array(derivs).reshape(q - 1, m), float(yaw) if yaw != "" else None, t)

    firsts = {}
    for r in body:
        k = int(r[col["segment_index"]])
        firsts.setdefault(k, r)
    if list(firsts) == [-1]:
        return Trajectory([], start=state(body[0]))
    ks = sorted(firsts)
    end_t = float(body[-1][col["t"]])
    segs = []
    for i, k in enumerate(ks):
        r = firsts[k]
        t_next = float(firsts[ks[i + 1]][col["t"]]) if i + 1 < len(ks) else end_t
        u = [float(r[col[f"u{j}"]]) for j in range(m)]
        segs.append(propagate(state(r), u, float(r[col["u_yaw"]]), t_next - float(r[col["t"]])))
    return Trajectory(segs, start=segs[0].start)


# --------------------------------------------------------------------------
# stats
# --------------------------------------------------------------------------


def plan_stats(res, req):
    terms = res.terms or {}
    out = {
        "status": res.status.value,
        "total_cost": _finite(res.total_cost),
        "expansions": res.expansions,
        "runtime_ms": res.runtime * 1e3,
        "duration": res.trajectory.T if res.ok else None,
    }
    if res.ok:
        out.update(
            {
                "J_q": terms["J_q"],
                "rho_T_T": terms["rho_T_T"],
                "J_c": terms["J_c"],
                "rho_c_J_c": terms["rho_c_J_c"],
                "J_psi": terms["J_psi"],
                "rho_psi_J_psi": terms["rho_psi_J_psi"],
                "weights": {"rho_T": req.rho_T, "rho_c": req.rho_c, "rho_psi": req.rho_psi},
            }
        )
    return out


def decomposition_sum(stats):
    return stats["J_q"] + stats["rho_T_T"] + stats["rho_c_J_c"] + stats["rho_psi_J_psi"]


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------


@dataclass(eq=False)
class Scenario:
    name: str
    path: Path | None
    raw: dict
    spec: SystemSpec
    workspace: Workspace | None
    truth: OccupancyGrid | None
    start: State
    goal: GoalRegion
    rho_T: float = 1.0
    rho_c: float = 0.0
    rho_psi: float = 0.0
    theta: float = 2 * math.pi
    tunnel_radius: float | None = None
    mode: Mode = Mode.STATIC
    T_max: float = math.inf
    obstacles: tuple = ()
    apf_as_obstacles: bool = False
    max_expansions: int = 1_000_000
    replan: dict | None = None
    team: dict | None = None
    extra: dict = field(default_factory=dict)

    def request(self, **kw):
        base = dict(
            rho_T=self.rho_T,
            rho_c=self.rho_c,
            rho_psi=self.rho_psi,
            theta=self.theta,
            mode=self.mode,
            T_max=self.T_max,
            workspace=self.workspace,
            obstacles=self.obstacles,
            max_expansions=self.max_expansions,
        )
        base.update(kw)
        start = base.pop("start", self.start)
        goal = base.pop("goal", self.goal)
        return PlanRequest(self.spec, start, goal, **base)


def _need(obj, key, where):
    if key not in obj:
        raise ScenarioError(f"{where}: missing field '{key}'")
    return obj[key]


def parse_system(obj, where="system"):
    try:
        return SystemSpec(
            m=int(_need(obj, "m", where)),
            q=int(_need(obj, "q", where)),
            u_max=float(_need(obj, "u_max", where)),
            du=int(_need(obj, "du", where)),
            dt=float(_need(obj, "dt", where)),
            v_max=float(_need(obj, "v_max", where)),
            a_max=float(obj.get("a_max", math.inf)),
            j_max=obj.get("j_max"),
            yaw_enabled=bool(obj.get("yaw_enabled", False)),
            u_psi_max=float(obj.get("u_psi_max", 0.0)),
            du_psi=int(obj.get("du_psi", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def parse_shape(obj, where="shape"):
    if "box" in obj:
        b = obj["box"]
        return ConvexPolytope.box(b.get("center", [0.0, 0.0]), _need(b, "half", where))
    if "vertices" in obj:
        return ConvexPolytope.from_vertices(np.array(obj["vertices"], dtype=float))
    if "A" in obj:
        return ConvexPolytope(np.array(obj["A"], float), np.array(_need(obj, "b", where), float))
    raise ScenarioError(f"{where}: shape needs 'box', 'vertices' or 'A'/'b'")


def parse_grid(obj, base_dir, seed=0, where="grid"):
    if "file" in obj:
        path = Path(base_dir or ".") / obj["file"]
        if not path.exists():
            raise ScenarioError(f"{where}: grid file {path} does not exist")
        return load_grid(path)
    if "cells" in obj:
        return OccupancyGrid.from_json(obj, source=where)
    g = OccupancyGrid.empty(_need(obj, "origin", where), float(_need(obj, "resolution", where)),
                            _need(obj, "dims", where))
    for lo, hi in obj.get("boxes", []):
        g = g.fill_box(np.array(lo, float), np.array(hi, float), OCCUPIED)
    rnd = obj.get("random_boxes")
    if rnd:
        rng = np.random.default_rng(seed)
        lo_r, hi_r = np.array(rnd["region"][0], float), np.array(rnd["region"][1], float)
        for _ in range(int(rnd["count"])):
            c = rng.uniform(lo_r, hi_r)
            half = 0.5 * float(rnd["size"])
            g = g.fill_box(c - half, c + half, OCCUPIED)
    for p in obj.get("clear", []):
        # keep the listed points (usually start and goal) free
        lo = np.array(p, float) - float(obj.get("clear_radius", 0.0))
        hi = np.array(p, float) + float(obj.get("clear_radius", 0.0))
        g = g.fill_box(lo, hi, 0)
    return g


def parse_state(obj, spec, where="start"):
    pos = np.array(_need(obj, "pos", where), float)
    if pos.shape != (spec.m,):
        raise ScenarioError(f"{where}: pos must have {spec.m} entries")
    derivs = np.zeros((spec.q - 1, spec.m))
    for r, key in enumerate(["vel", "acc", "jerk"][: spec.q - 1]):
        if key in obj:
            derivs[r] = obj[key]
    yaw = obj.get("yaw", 0.0) if spec.yaw_enabled else None
    for r, bound in enumerate(spec.derivative_bounds):
        if np.any(np.abs(derivs[r]) > bound + 1e-9):
            raise ScenarioError(f"{where}: derivative {r + 1} outside its bound")
    return State(pos, derivs, yaw, float(obj.get("t", 0.0)))


def parse_goal(obj, res, where="goal"):
    tol = obj.get("tol", res)
    try:
        return GoalRegion(np.array(_need(obj, "pos", where), float), tol, tuple(obj.get("deriv_tol", ())))
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def parse_lvp(obj, where="obstacle"):
    return LVP(
        parse_shape(obj, where),
        np.array(obj.get("v_c", [0.0, 0.0]), float),
        float(obj.get("v_e", 0.0)),
        float(obj.get("active_from", 0.0)),
        float(obj["active_until"]) if obj.get("active_until") is not None else math.inf,
    )


def load_scenario(path_or_obj, seed=0):
    """Parse a scenario JSON file (or an already-loaded dict)."""
    if isinstance(path_or_obj, dict):
        raw, path, src = path_or_obj, None, "<scenario>"
    else:
        path = Path(path_or_obj)
        src = str(path)
        if not path.exists():
            raise ScenarioError(f"{src}: no such file")
        text = path.read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{src}:{exc.lineno}: {exc.msg}") from None
    base_dir = path.parent if path else None
    spec = parse_system(_need(raw, "system", src), f"{src}: system")
    potential = raw.get("potential")
    pot = None
    if potential:
        pot = (float(potential["F_max"]), float(potential["d_thr"]), float(potential["k"]))
    ws = truth = None
    if "grid" in raw:
        truth = parse_grid(raw["grid"], base_dir, seed, f"{src}: grid")
        known = truth
        if raw.get("replan", {}).get("unknown_initial"):
            known = truth.with_cells(np.full(truth.dims, UNKNOWN, dtype=np.uint8))
        ws = Workspace(known, bool(raw.get("bounded_workspace", True)), pot)
    weights = raw.get("weights", {})
    for k, v in weights.items():
        if float(v) < 0:
            raise ScenarioError(f"{src}: weight {k} must be non-negative")
    mode = Mode(raw.get("mode", "static"))
    theta = raw.get("theta")
    if theta is None and "fov_deg" in raw:
        theta = math.radians(raw["fov_deg"])
    res = ws.resolution if ws is not None else 0.5 * spec.v_max * spec.dt
    team = raw.get("team")
    start = parse_state(raw["start"], spec, f"{src}: start") if "start" in raw else None
    goal = parse_goal(raw["goal"], res, f"{src}: goal") if "goal" in raw else None
    if team is None and (start is None or goal is None):
        raise ScenarioError(f"{src}: single-robot scenarios need 'start' and 'goal'")
    tunnel = raw.get("tunnel")
    return Scenario(
        name=raw.get("name", path.stem if path else "scenario"),
        path=path,
        raw=raw,
        spec=spec,
        workspace=ws,
        truth=truth,
        start=start,
        goal=goal,
        rho_T=float(weights.get("rho_T", 1.0)),
        rho_c=float(weights.get("rho_c", 0.0)),
        rho_psi=float(weights.get("rho_psi", 0.0)),
        theta=float(theta) if theta is not None else 2 * math.pi,
        tunnel_radius=float(tunnel["radius"]) if tunnel else None,
        mode=mode,
        T_max=float(raw.get("T_max", math.inf)),
        obstacles=tuple(parse_lvp(o, f"{src}: obstacles[{i}]") for i, o in enumerate(raw.get("obstacles", []))),
        apf_as_obstacles=bool(raw.get("apf_as_obstacles", False)),
        max_expansions=int(raw.get("max_expansions", 1_000_000)),
        replan=raw.get("replan"),
        team=team,
    )
