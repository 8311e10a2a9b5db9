"""Compare the numba and numpy paths of every kernel, plus one full plan.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

The end-to-end line runs a fresh interpreter per path so the
PRIMPLAN_DISABLE_NUMBA switch is honoured at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from primplan import kernels


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    occ = rng.random((200, 200)) < 0.05
    coeffs = rng.normal(size=(27 * 2, 3))
    ts = np.linspace(0.0, 1.0, 16)
    pts = rng.uniform(0, 50, size=(5000, 2))
    verts = np.cumsum(rng.normal(size=(60, 2)), axis=0)
    return {
        "squared_edt 200x200": lambda nb: kernels.squared_edt(occ, use_numba=nb),
        "eval_polys 54x16": lambda nb: kernels.eval_polys(coeffs, ts, use_numba=nb),
        "cell_indices 5000": lambda nb: kernels.cell_indices(pts, [0.0, 0.0], 0.25, [200, 200], use_numba=nb),
        "polyline_distance 5000x60": lambda nb: kernels.polyline_distance(pts, verts, use_numba=nb),
    }


PLAN_SNIPPET = """
import time
from importlib.resources import files
from primplan.io import load_scenario
from primplan.search import plan_astar
sc = load_scenario(str(files('primplan') / 'data' / 'latency_100.json'))
plan_astar(sc.request(max_expansions=20))
t0 = time.perf_counter()
r = plan_astar(sc.request())
print(time.perf_counter() - t0, r.expansions)
"""


def end_to_end(disable):
    env = dict(os.environ, PRIMPLAN_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", PLAN_SNIPPET], env=env, capture_output=True, text=True, check=True)
    secs, exp = out.stdout.split()
    return float(secs), int(exp)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--no-plan", action="store_true", help="skip the end-to-end plan timing")
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        print("numba is not importable; only the numpy path can run")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  max|diff|")
    for name, fn in cases(rng).items():
        a = fn(False)
        b = fn(True)
        finite = np.isfinite(a)
        diff = float(np.max(np.abs(a[finite] - b[finite]), initial=0.0))
        assert np.array_equal(np.isfinite(a), np.isfinite(b))
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        print(f"{name:28s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}  {diff:.1e}")
    if not args.no_plan:
        s_np, e_np = end_to_end(True)
        s_nb, e_nb = end_to_end(False)
        assert e_np == e_nb, "paths disagree on the search itself"
        print(f"{'plan latency_100 (A*)':28s} {s_np * 1e3:10.1f} {s_nb * 1e3:10.1f} {s_np / s_nb:8.2f}  expansions={e_nb}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
