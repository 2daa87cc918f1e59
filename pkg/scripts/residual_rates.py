"""Energy-balance residual of the cohesive scheme under time refinement.

    python3 scripts/residual_rates.py [--eps 0.05] [--steps 100 200 400]
"""

import argparse
import time

from debond.cohesive import evolve_cohesive
from debond.config import RunConfig, build_problem


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--steps", type=int, nargs="+", default=[100, 200, 400])
    ap.add_argument("--nodes", type=int, default=401)
    args = ap.parse_args()
    base = RunConfig()
    prev = None
    for n in args.steps:
        cfg = base.replace(
            geometry=base.geometry.__class__(nodes=(args.nodes,), clamp=("right",)),
            time=base.time.__class__(steps=n),
        )
        p = build_problem(cfg)
        t0 = time.perf_counter()
        tr = evolve_cohesive(p.mesh, p.form, p.density, args.eps, p.loading, p.time_grid, settings=cfg.solver)
        r = tr.ledger.max_abs_residual
        ratio = "" if prev is None else f" ratio {prev / r:.3f}"
        print(f"steps {n:5d}: max|r_k| = {r:.6f}{ratio}  ({time.perf_counter() - t0:.1f} s)")
        prev = r


if __name__ == "__main__":
    main()
