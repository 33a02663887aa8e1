"""Compare the compiled and pure-Python solver kernels.

Usage: python benchmarks/bench_solver.py [--solves N] [--game]
"""
import argparse
import time

import numpy as np

from reachavoid.geometry import ball, box, build_srs
from reachavoid.solver import AVAILABLE_BACKENDS, solve_min_distance


def instances(count, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for t in range(count):
        n = 2 + t % 2
        k = int(rng.integers(1, 4))
        a = rng.uniform(-4, 4, n)
        srs = build_srs([rng.uniform(-4, 4, n) for _ in range(k)], a, rng.uniform(1, 1.5, k),
                        rng.uniform(0, 0.5, k), box([-5] * n, [5] * n))
        out.append((srs, ball(rng.uniform(-3, 3, n), float(rng.uniform(0.2, 1.0))), a))
    return out


def time_solves(backend, cases):
    t0 = time.perf_counter()
    values = [solve_min_distance(s, g, None, start=(a, g.atoms[0].center), backend=backend).value
              for s, g, a in cases]
    return time.perf_counter() - t0, np.array(values)


def time_game(backend):
    from reachavoid.engine import run_game
    from reachavoid.scenarios import generate_random_scenario
    t = {"dimension": 2, "domain": {"type": "box", "lo": [-5, -5], "hi": [5, 5]},
         "target": {"type": "ball", "center": [0, 0], "radius": 1},
         "n_defenders": 3, "n_attackers": 3, "defender_speed": 1.0, "attacker_speed": 1.0,
         "capture_radius": 0.4}
    cfg = generate_random_scenario(t, 3, t_max=5.0)
    t0 = time.perf_counter()
    tr = run_game(cfg, "mdea", "optimal", backend=backend, record_phi=False)
    return time.perf_counter() - t0, tr.summary()["captures"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--solves", type=int, default=400)
    ap.add_argument("--game", action="store_true", help="also time a 3v3 game (slow on python)")
    args = ap.parse_args()
    cases = instances(args.solves)
    rows = {}
    for b in AVAILABLE_BACKENDS:
        rows[b] = time_solves(b, cases)
        print(f"{b:<9} {args.solves} solves  {rows[b][0]:8.3f} s  "
              f"{1e3 * rows[b][0] / args.solves:7.3f} ms/solve")
    if len(rows) == 2:
        tc, vc = rows["compiled"]
        tp, vp = rows["python"]
        print(f"speedup {tp / tc:.1f}x   max |value diff| {np.max(np.abs(vc - vp)):.1e}")
    if args.game:
        for b in AVAILABLE_BACKENDS:
            dt, caps = time_game(b)
            print(f"{b:<9} 3v3 game (5 s)  {dt:8.3f} s  captures {caps}")


if __name__ == "__main__":
    main()
