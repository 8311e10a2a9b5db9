"""Regenerate the shipped scenario files in src/primplan/data.

The maps are geometric reconstructions, not the original environments.
Run from the repository root: ``python3 scripts/make_scenarios.py``.
"""

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "primplan" / "data"

ACC = {"m": 2, "q": 2, "u_max": 1.0, "du": 3, "dt": 1.0, "v_max": 2.0, "a_max": 1.0}


def potential_tunnel():
    # two pillars with a gap; the nominal plan squeezes through it, the
    # potential-aware plan keeps away from the walls inside the tunnel. Pillar
    # faces sit off the 0.5 m lattice rows so no plan can ride along a face.
    return {
        "name": "potential_tunnel",
        "description": "Reconstruction: pillar gap, potential cost plus a tunnel around the nominal plan",
        "system": ACC,
        "grid": {
            "origin": [0, 0],
            "resolution": 0.25,
            "dims": [48, 28],
            "boxes": [[[5.0, 0.0], [6.5, 2.75]], [[5.0, 4.25], [6.5, 7.0]], [[8.5, 4.75], [9.5, 5.75]]],
        },
        "potential": {"F_max": 1.0, "d_thr": 1.0, "k": 2.0},
        "start": {"pos": [1.0, 2.0]},
        "goal": {"pos": [11.0, 5.0], "tol": 0.25},
        "weights": {"rho_T": 1.0, "rho_c": 10.0},
        "tunnel": {"radius": 1.0},
        "apf_as_obstacles": True,
    }


def fov():
    # start facing +x with speed, goal behind: a narrow FOV forces a turn first
    return {
        "name": "fov_turn",
        "description": "Reconstruction: moving right at start, goal to the left, yaw constrained",
        "system": dict(ACC, yaw_enabled=True, u_psi_max=1.0, du_psi=3),
        "grid": {"origin": [-6, -6], "resolution": 0.25, "dims": [48, 48]},
        "start": {"pos": [0.0, 0.0], "vel": [1.0, 0.0], "yaw": 0.0},
        "goal": {"pos": [-4.0, 1.0], "tol": 0.25},
        "weights": {"rho_T": 1.0, "rho_psi": 1.0},
        "fov_deg": 90.0,
    }


def corridor(config):
    # corridor x in [4, 8], y in [2, 4]; one obstacle drives out of it towards
    # the start side. Config 1 is narrow (leaves a lane), config 2 fills it.
    half = [0.5, 0.3] if config == 1 else [0.5, 1.25]
    cy = 3.6 if config == 1 else 3.0
    return {
        "name": f"moving_corridor_{config}",
        "description": f"Reconstruction: corridor with a linearly moving obstacle, configuration {config}",
        "system": dict(ACC, u_max=2.0, dt=0.5),
        "grid": {
            "origin": [0, 0],
            "resolution": 0.25,
            "dims": [48, 24],
            "boxes": [[[4.0, 0.0], [8.0, 2.0]], [[4.0, 4.0], [8.0, 6.0]]],
        },
        "mode": "dynamic",
        "T_max": 20.0,
        "start": {"pos": [1.0, 1.0]},
        "goal": {"pos": [11.0, 3.0], "tol": 0.25},
        "weights": {"rho_T": 10.0},
        "corridor": {"x_entry": 4.0, "x_exit": 8.0},
        "obstacles": [{"box": {"center": [7.0, cy], "half": half}, "v_c": [-1.5, 0.0], "v_e": 0.0}],
    }


def moving_replan():
    # obstacles on curved paths; the planner sees only position and velocity
    # at each 1 Hz replan. Inflation rate covers a * P / 2 for |accel| <= 0.3.
    def piece(x0, y0, vx, vy, ax, ay):
        return {"t0": 0.0, "coeffs": [[x0, vx, 0.5 * ax], [y0, vy, 0.5 * ay]]}

    return {
        "name": "moving_replan",
        "description": "Reconstruction: corridor with obstacles on unobservable curved paths, 1 Hz replans",
        "system": ACC,
        "grid": {
            "origin": [0, 0],
            "resolution": 0.25,
            "dims": [56, 32],
            "boxes": [[[0.0, 0.0], [14.0, 1.0]], [[0.0, 7.0], [14.0, 8.0]]],
        },
        "mode": "dynamic",
        "T_max": 40.0,
        "start": {"pos": [1.0, 4.0]},
        "goal": {"pos": [13.0, 4.0], "tol": 0.25},
        "weights": {"rho_T": 10.0},
        "replan": {
            "period": 1.0,
            "epochs": 40,
            "scripted": [
                {
                    "box": {"half": [0.4, 0.4]},
                    "v_e": 0.2,
                    "pieces": [piece(5.0, 6.2, 0.0, -1.2, 0.0, 0.3)],
                },
                {
                    "box": {"half": [0.4, 0.4]},
                    "v_e": 0.2,
                    "pieces": [piece(9.0, 1.8, -0.1, 0.9, 0.0, -0.2)],
                },
            ],
        },
    }


def unknown_office():
    # sensing range covers one replan period of travel plus braking from v_max:
    # 2 m/s * 1 s + (2 m/s)^2 / (2 * 1 m/s^2) = 4 m, plus margin
    return {
        "name": "unknown_office",
        "description": "Reconstruction: office-like rooms revealed by a forward-facing sensor wedge",
        "system": dict(ACC, yaw_enabled=True, u_psi_max=1.0, du_psi=3),
        "grid": {
            "origin": [0, 0],
            "resolution": 0.25,
            "dims": [64, 40],
            "boxes": [
                [[5.0, 0.0], [5.5, 6.0]],
                [[5.0, 7.5], [5.5, 10.0]],
                [[10.0, 3.5], [10.5, 10.0]],
                [[10.0, 0.0], [10.5, 2.0]],
                [[7.0, 4.0], [8.5, 5.5]],
            ],
        },
        "potential": {"F_max": 1.0, "d_thr": 0.75, "k": 2.0},
        "start": {"pos": [2.0, 2.0], "yaw": 0.0},
        "goal": {"pos": [14.0, 8.0], "tol": 0.25},
        "weights": {"rho_T": 2.0, "rho_c": 1.0, "rho_psi": 0.5},
        "fov_deg": 90.0,
        "replan": {"period": 1.0, "epochs": 60, "unknown_initial": True, "sensor": {"fov_deg": 90.0, "range": 6.0}},
    }


def latency_grid():
    return {
        "name": "latency_100",
        "description": "100 x 100 cell map with seeded random blocks, used for replan latency",
        "system": ACC,
        "grid": {
            "origin": [0, 0],
            "resolution": 0.25,
            "dims": [100, 100],
            "random_boxes": {"region": [[3, 3], [22, 22]], "count": 12, "size": 1.4},
            "clear": [[1, 1], [23, 23]],
            "clear_radius": 0.75,
        },
        "potential": {"F_max": 1.0, "d_thr": 1.0, "k": 2.0},
        "start": {"pos": [1.0, 1.0]},
        "goal": {"pos": [23.0, 23.0], "tol": 0.5},
        "weights": {"rho_T": 10.0, "rho_c": 1.0},
        "replan": {"period": 1.0, "epochs": 30},
    }


def _robot(i, start, goal, period=None):
    r = {"id": i, "box": {"half": [0.3, 0.3]}, "start": {"pos": start}, "goal": {"pos": goal, "tol": 0.25}}
    if period is not None:
        r["replan_period"] = period
    return r


def team_star(mode):
    robots = []
    for k in range(4):
        a = math.pi / 4 + k * math.pi / 2
        p = [round(4 * math.cos(a) * 2) / 2, round(4 * math.sin(a) * 2) / 2]
        robots.append(_robot(k, p, [-p[0], -p[1]]))
    return {
        "name": f"team_star_{mode}",
        "description": "Reconstruction: four robots swapping to antipodal corners",
        "system": ACC,
        "grid": {"origin": [-6, -6], "resolution": 0.25, "dims": [48, 48]},
        "weights": {"rho_T": 10.0},
        "T_max": 40.0,
        "team": {"mode": mode, "rounds": 100, "robots": robots},
    }


def team_tunnel(mode):
    # a 2.5 m wide passage; two robots per side swap through it
    robots = [
        _robot(0, [-5.0, 1.0], [5.0, 1.0]),
        _robot(1, [-5.0, -1.0], [5.0, -1.0]),
        _robot(2, [5.0, 1.0], [-5.0, 1.0]),
        _robot(3, [5.0, -1.0], [-5.0, -1.0]),
    ]
    return {
        "name": f"team_tunnel_{mode}",
        "description": "Reconstruction: two robots per side crossing through a tunnel",
        "system": ACC,
        "grid": {
            "origin": [-7, -4],
            "resolution": 0.25,
            "dims": [56, 32],
            "boxes": [[[-1.5, 1.25], [1.5, 4.0]], [[-1.5, -4.0], [1.5, -1.25]]],
        },
        "weights": {"rho_T": 10.0},
        "T_max": 40.0,
        "team": {"mode": mode, "rounds": 100, "robots": robots},
    }


def walled_goal():
    return {
        "name": "walled_goal",
        "description": "Goal enclosed by walls; planning must report NoPath",
        "system": ACC,
        "grid": {
            "origin": [0, 0],
            "resolution": 0.25,
            "dims": [32, 32],
            "boxes": [[[4.0, 4.0], [7.0, 4.5]], [[4.0, 6.5], [7.0, 7.0]], [[4.0, 4.0], [4.5, 7.0]], [[6.5, 4.0], [7.0, 7.0]]],
        },
        "start": {"pos": [1.0, 1.0]},
        "goal": {"pos": [5.5, 5.5], "tol": 0.25},
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    scenarios = [
        potential_tunnel(),
        fov(),
        corridor(1),
        corridor(2),
        moving_replan(),
        unknown_office(),
        latency_grid(),
        team_star("sequential"),
        team_star("decentralized"),
        team_tunnel("sequential"),
        team_tunnel("decentralized"),
        walled_goal(),
    ]
    for sc in scenarios:
        (OUT / f"{sc['name']}.json").write_text(json.dumps(sc, indent=1) + "\n")
        print(sc["name"])


if __name__ == "__main__":
    main()
