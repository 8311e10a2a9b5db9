"""Command line entry point: ``primplan plan|replan-sim|multirobot <scenario.json>``.

Exit codes: 0 success, 1 usage or input error, 2 no path, 3 horizon exceeded.
"""

import argparse
import csv
import io as _io
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import svg
from .env import OCCUPIED, Tunnel, Workspace
from .io import (
    ScenarioError,
    atomic_write_text,
    load_scenario,
    parse_goal,
    parse_shape,
    parse_state,
    plan_stats,
    write_json,
    write_trajectory_csv,
)
from .multirobot import TeamRobot, TeamScenario, plan_team
from .search import Status, plan_astar
from .sim import simulate_replan
from .validate import validate_plan

log = logging.getLogger("primplan")

EXIT_OK, EXIT_USAGE, EXIT_NO_PATH, EXIT_HORIZON = 0, 1, 2, 3


def exit_code(status):
    return {Status.SUCCESS: EXIT_OK, Status.NO_PATH: EXIT_NO_PATH, Status.HORIZON_EXCEEDED: EXIT_HORIZON}[status]


def apf_obstacle_workspace(ws):
    """Baseline map where every cell with positive potential counts as occupied."""
    cells = np.array(ws.grid.cells)
    cells[ws.pf.U > 0] = OCCUPIED
    return Workspace(ws.grid.with_cells(cells), ws.bounded, ws.potential_params)


def run_plan(sc, out, write_svg=True):
    out = Path(out)
    stats = {"scenario": sc.name}
    extra_trajs = []
    tunnel = None
    if sc.tunnel_radius is not None:
        nominal = plan_astar(sc.request(rho_c=0.0))
        stats["nominal"] = plan_stats(nominal, sc.request(rho_c=0.0))
        if nominal.ok:
            write_trajectory_csv(out / "nominal.csv", nominal.trajectory)
            tunnel = Tunnel.around(nominal.trajectory, sc.tunnel_radius, sc.workspace.resolution)
            extra_trajs.append(("nominal (rho_c = 0)", nominal.trajectory))
    if sc.apf_as_obstacles and sc.workspace is not None and sc.workspace.pf is not None:
        base_req = sc.request(workspace=apf_obstacle_workspace(sc.workspace), rho_c=0.0)
        base = plan_astar(base_req)
        stats["apf_baseline"] = plan_stats(base, base_req)
        if base.ok:
            write_trajectory_csv(out / "apf_baseline.csv", base.trajectory)
            extra_trajs.append(("potential as obstacles", base.trajectory))
    req = sc.request(tunnel=tunnel)
    res = plan_astar(req)
    stats.update(plan_stats(res, req))
    if res.ok:
        rep = validate_plan(res.trajectory, req)
        stats["validation"] = {"ok": rep.ok, "violations": rep.violations}
        write_trajectory_csv(out / "trajectory.csv", res.trajectory)
    write_json(out / "stats.json", stats)
    if write_svg:
        trajs = [t for _, t in extra_trajs] + ([res.trajectory] if res.ok else [])
        labels = [lab for lab, _ in extra_trajs] + (["plan"] if res.ok else [])
        obstacles = [(o.shape, "#555555") for o in sc.obstacles]
        text = svg.plot(sc.workspace, trajs, labels, sc.start.pos, sc.goal.center, obstacles, title=sc.name,
                        yaw_every=sc.spec.dt / 2 if sc.spec.yaw_enabled else None)
        atomic_write_text(out / "plot.svg", text)
    log.info("%s: %s cost=%s", sc.name, res.status.value, stats.get("total_cost"))
    return exit_code(res.status)


def run_replan_sim(sc, out, compare_astar=False, write_svg=True):
    if sc.replan is None:
        raise ScenarioError(f"{sc.name}: replan-sim needs a 'replan' section")
    out = Path(out)
    res = simulate_replan(sc, compare_astar)
    if res.executed.segments:
        write_trajectory_csv(out / "executed.csv", res.executed)
    cols = ["epoch", "t", "status", "expansions", "runtime_ms", "cost", "inconsistent"]
    if compare_astar:
        cols += ["astar_expansions", "astar_runtime_ms", "astar_cost"]
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for e in res.epochs:
        row = [e.index, repr(e.t), e.status, e.expansions, f"{e.runtime_ms:.3f}", repr(e.cost), e.inconsistent]
        if compare_astar:
            row += [e.astar_expansions, f"{e.astar_runtime_ms:.3f}", repr(e.astar_cost)]
        w.writerow(row)
    atomic_write_text(out / "epochs.csv", buf.getvalue())
    summary = {
        "scenario": sc.name,
        "reached": res.reached,
        "epochs": len(res.epochs),
        "duration": res.executed.T,
        "lpastar_expansions": int(sum(e.expansions for e in res.epochs)),
        "lpastar_runtime_ms_median": float(np.median([e.runtime_ms for e in res.epochs])) if res.epochs else None,
        "min_obstacle_clearance": None if math.isinf(res.min_obstacle_clearance) else res.min_obstacle_clearance,
    }
    if compare_astar:
        summary["astar_expansions"] = int(sum(e.astar_expansions for e in res.epochs))
        summary["costs_match"] = all(
            (math.isinf(e.cost) and math.isinf(e.astar_cost)) or abs(e.cost - e.astar_cost) <= 1e-9
            for e in res.epochs
        )
    write_json(out / "stats.json", summary)
    if write_svg:
        ws = Workspace(res.final_known, True, None) if res.final_known is not None else None
        text = svg.plot(ws, [res.executed], ["executed"], sc.start.pos, sc.goal.center, title=sc.name)
        atomic_write_text(out / "plot.svg", text)
    return EXIT_OK if res.reached else EXIT_NO_PATH


def team_from_scenario(sc):
    team = sc.team
    res = sc.workspace.resolution if sc.workspace is not None else 0.5 * sc.spec.v_max * sc.spec.dt
    robots = []
    for i, r in enumerate(team["robots"]):
        where = f"team.robots[{i}]"
        goal = dict(r["goal"])
        goal.setdefault("deriv_tol", [1e-6] * (sc.spec.q - 1))
        robots.append(
            TeamRobot(
                r.get("id", i),
                parse_shape(r, where),
                sc.spec,
                parse_state(r["start"], sc.spec, where + ".start"),
                parse_goal(goal, res, where + ".goal"),
                r.get("replan_period"),
            )
        )
    try:
        return TeamScenario(
            robots,
            sc.workspace,
            sc.obstacles,
            team.get("mode", "sequential"),
            int(team.get("rounds", 100)),
            sc.rho_T,
            sc.rho_c,
            sc.T_max if math.isfinite(sc.T_max) else 60.0,
            int(team.get("max_expansions", 200_000)),
        )
    except ValueError as exc:
        raise ScenarioError(f"{sc.name}: {exc}") from None


def run_multirobot(sc, out, write_svg=True, mode=None):
    if sc.team is None:
        raise ScenarioError(f"{sc.name}: multirobot needs a 'team' section")
    out = Path(out)
    team = team_from_scenario(sc)
    if mode is not None:
        team.mode = mode
    res = plan_team(team)
    for o in res.outcomes:
        write_trajectory_csv(out / f"robot_{o.id}.csv", o.trajectory)
    report = {
        "scenario": sc.name,
        "mode": res.mode,
        "runtime_s": res.runtime,
        "all_reached": all(o.reached for o in res.outcomes),
        "pairwise_ok": res.clearance.ok,
        "min_clearance": {f"{team.robots[i].id}-{team.robots[j].id}": c for (i, j), c in res.clearance.min_clearance.items()},
        "robots": [
            {
                "id": o.id,
                "status": o.status.value,
                "reached": o.reached,
                "duration": o.trajectory.T,
                "plan_time_s": o.plan_time,
                "expansions": o.expansions,
                "replans": o.replans,
                "failed_ticks": o.failed_ticks,
            }
            for o in res.outcomes
        ],
    }
    write_json(out / "clearance.json", report)
    if write_svg:
        text = svg.plot(sc.workspace, res.trajectories, [f"robot {o.id}" for o in res.outcomes], title=sc.name)
        atomic_write_text(out / "plot.svg", text)
    return EXIT_OK if res.ok else EXIT_NO_PATH


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="primplan", description="Motion-primitive lattice planning scenarios.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scenario", help="scenario JSON file")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized scenario content")
    common.add_argument("--svg", action=argparse.BooleanOptionalAction, default=True, help="write plot.svg")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("plan", parents=[common], help="one-shot plan")
    rs = sub.add_parser("replan-sim", parents=[common], help="closed-loop replanning simulation")
    rs.add_argument("--compare-astar", action="store_true", help="also run fresh A* every epoch")
    mr = sub.add_parser("multirobot", parents=[common], help="team planning")
    mr.add_argument("--mode", choices=["sequential", "decentralized"], help="override the scenario's team mode")
    return p


def main(argv=None):
    level = os.environ.get("PRIMPLAN_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario, seed=args.seed)
    except (ValueError, KeyError, TypeError, OSError) as exc:  # malformed input of any kind
        if isinstance(exc, ScenarioError):
            msg = str(exc)
        elif isinstance(exc, KeyError):
            msg = f"{args.scenario}: missing field {exc}"
        else:
            msg = f"{args.scenario}: {exc}"
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "plan":
            if sc.team is not None and sc.start is None:
                raise ScenarioError(f"{args.scenario}: team scenario; use the multirobot command")
            return run_plan(sc, args.out, args.svg)
        if args.command == "replan-sim":
            return run_replan_sim(sc, args.out, args.compare_astar, args.svg)
        return run_multirobot(sc, args.out, args.svg, args.mode)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
