"""Cohesive-to-brittle sweep with rate table on the desk scenario.

    python3 scripts/eps_sweep.py [--config configs/desk_1d.toml] [--steps 100]
"""

import argparse
from dataclasses import replace

from debond.config import load_config, build_problem
from debond.limit import EpsSchedule, StudySetup, convergence_study, rate_table


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/desk_1d.toml")
    ap.add_argument("--steps", type=int)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.steps:
        cfg = cfg.replace(time=replace(cfg.time, steps=args.steps))
    p = build_problem(cfg)
    st = cfg.study
    setup = StudySetup(p.mesh, p.form, p.density, p.kappa, p.loading, p.time_grid,
                       EpsSchedule(st.eps, st.delta_exponent), cfg.solver, tuple(st.sensitivity), args.threads)
    report, _, _ = convergence_study(setup)
    print(f"brittle sup_t |u|_H1 = {report.brittle_h1_sup:.5f}")
    print("eps       h1        setdiff   gap       order_h1  order_sd  order_gap")
    for row in rate_table(report):
        print("  ".join(f"{v:<8.4g}" if not isinstance(v, str) else f"{v:<8}" for v in row))
    for q, rows in sorted(report.sensitivity.items()):
        print(f"delta exponent {q:g}: setdiff " + ", ".join(f"{e.setdiff:.4f}" for e in rows))


if __name__ == "__main__":
    main()
