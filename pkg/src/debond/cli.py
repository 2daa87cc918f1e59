"""Command line entry point: ``debond <verb> --config FILE [--out DIR] ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from collections import Counter
from dataclasses import replace

import numpy as np

from . import output as io
from .brittle import (
    displacement_competitors,
    evolve_brittle,
    reformulation_check,
    shape_stability_audit,
)
from .cohesive import (
    brute_force_step_oracle,
    cohesive_competitors,
    evolve_cohesive,
    incremental_minimize,
    stability_audit,
    step_objective,
)
from .config import build_problem, load_config
from .density import PsiFamily, axiom_audit
from .errors import ConfigurationError, DebondError, InternalConsistencyError
from .grid import assemble_dirichlet_form, build_mesh
from .limit import RATE_COLUMNS, EpsSchedule, StudySetup, brittle_inclusion_violations, convergence_study, rate_table
from .trace import support_front

VERBS = ("run-cohesive", "run-brittle", "limit-study", "audit", "oracle")
ENV_OUT = "DEBOND_OUT"

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("debond")


def _check(passed, **detail):
    return {"passed": bool(passed), **detail}


def _snapshots(writer, trace, times, prefix):
    for k in io.snapshot_indices(trace, times):
        header, rows = io.snapshot_rows(trace, k)
        writer.csv(f"snapshots/{prefix}_t{trace.states[k].t:.6f}.csv", header, rows)


def _front_law_error(problem, trace):
    """1D only: distance of the computed front to ``max(l0, lambda / sqrt(2 kappa))``."""
    mesh = problem.mesh
    if mesh.dimension != 1:
        return None
    kap = problem.kappa[~mesh.a0_nodes]
    if not np.allclose(kap, kap[0]):
        return None
    lam = np.array([problem.loading.amplitude(t) for t in trace.times])
    law = np.minimum(np.maximum(mesh.r0, lam / np.sqrt(2.0 * kap[0])), mesh.lengths[0])
    return float(np.max(np.abs(np.asarray(trace.front) - law)))


def run_cohesive(cfg, problem, writer, plots):
    eps = cfg.study.run_eps
    p = problem
    trace = evolve_cohesive(p.mesh, p.form, p.density, eps, p.loading, p.time_grid, settings=cfg.solver)
    header, rows = io.cohesive_trace_rows(trace)
    writer.csv("cohesive_trace.csv", header, rows)
    _snapshots(writer, trace, cfg.output.snapshot_times, "cohesive")
    led = trace.ledger
    summary = {
        "eps": eps,
        "steps": len(trace) - 1,
        "final": {"elastic": led.elastic[-1], "potential": led.potential[-1], "work": led.work[-1], "front": trace.front[-1]},
        "max_abs_residual": led.max_abs_residual,
        "max_abs_residual_trapezoid": float(np.max(np.abs(led.residual_trapezoid))),
        "restart_choices": dict(sorted(Counter(trace.meta["chosen"]).items())),
    }
    writer.json("cohesive_summary.json", summary)
    if plots:
        fig = io.plot_series(f"cohesive run, eps={eps:g}", trace.times, {"elastic": led.elastic, "potential": led.potential, "work": led.work}, "energy")
        writer.svg("cohesive_energy.svg", fig)
        io.close(fig)
    return {"cohesive_invariants": _check(True, steps=len(trace) - 1)}


def run_brittle(cfg, problem, writer, plots):
    p = problem
    trace = evolve_brittle(p.mesh, p.form, p.kappa, p.loading, p.time_grid, settings=cfg.solver)
    header, rows = io.brittle_trace_rows(trace)
    writer.csv("brittle_trace.csv", header, rows)
    _snapshots(writer, trace, cfg.output.snapshot_times, "brittle")
    led = trace.ledger
    monotone = all(np.all(b.A[a.A]) for a, b in zip(trace.states, trace.states[1:]))
    tol = cfg.solver.positivity_tol * max(p.loading.ceiling, 1.0)
    incl = brittle_inclusion_violations(p.form, trace, tol)
    summary = {
        "steps": len(trace) - 1,
        "strategy": trace.meta["strategy"],
        "final": {"energy": led.elastic[-1], "dissipation": led.potential[-1], "work": led.work[-1], "front": trace.front[-1]},
        "max_abs_residual": led.max_abs_residual,
        "front_law_max_error": _front_law_error(p, trace),
        "cell": p.mesh.cell_size,
    }
    writer.json("brittle_summary.json", summary)
    if plots:
        fig = io.plot_series("brittle run", trace.times, {"front": trace.front}, "front" if p.mesh.dimension == 1 else "area fraction")
        writer.svg("brittle_front.svg", fig)
        io.close(fig)
    return {
        "irreversibility": _check(monotone),
        "positivity_inclusion": _check(incl == 0, violations=incl),
    }


def limit_study(cfg, problem, writer, plots):
    p = problem
    st = cfg.study
    setup = StudySetup(
        p.mesh, p.form, p.density, p.kappa, p.loading, p.time_grid,
        EpsSchedule(st.eps, st.delta_exponent), cfg.solver, tuple(st.sensitivity), st.threads,
    )
    report, brittle, traces = convergence_study(setup)
    writer.json("convergence_report.json", report.as_dict())
    table = rate_table(report) if len(report.entries) >= 2 else []
    writer.csv("rate_table.csv", RATE_COLUMNS, table)
    sens_rows = [
        (q, e.eps, e.delta, e.h1, e.setdiff, e.gap)
        for q, rows in sorted(report.sensitivity.items())
        for e in rows
    ]
    writer.csv("sensitivity.csv", ("delta_exponent", "eps", "delta", "h1", "setdiff", "gap"), sens_rows)
    fronts = []
    for eps, tr in zip(setup.schedule.eps, traces):
        thr = eps * setup.schedule.delta(eps)
        fronts.append([support_front(p.mesh, p.mesh.a0_nodes | (s.gamma >= thr)) for s in tr.states])
    header = ("t", "brittle") + tuple(f"eps_{e:g}" for e in setup.schedule.eps)
    writer.csv("fronts.csv", header, [(t, brittle.front[k], *[f[k] for f in fronts]) for k, t in enumerate(brittle.times)])
    if plots and report.entries:
        fig = io.plot_loglog(report.eps, {"H1": report.column("h1"), "set difference": report.column("setdiff"), "potential gap": report.column("gap")})
        writer.svg("errors_loglog.svg", fig)
        io.close(fig)
        series = {"brittle": brittle.front}
        series.update({f"eps={e:g}": f for e, f in zip(setup.schedule.eps, fronts)})
        fig = io.plot_series("debonded front", brittle.times, series, "front" if p.mesh.dimension == 1 else "area fraction")
        writer.svg("fronts.svg", fig)
        io.close(fig)
    mono = sum(e.monotonicity_violations for e in report.entries)
    incl = sum(e.inclusion_violations for e in report.entries)
    wp = max((e.well_prepared for e in report.entries), default=0.0)
    return {
        "eps_set_monotone": _check(mono == 0, violations=mono),
        "eps_set_inclusion": _check(incl == 0, violations=incl),
        "brittle_inclusion": _check(report.brittle_inclusion_violations == 0, violations=report.brittle_inclusion_violations),
        "well_prepared": _check(wp == 0.0, value=wp),
    }


def checkpoint_indices(n_states, count):
    idx = np.unique(np.round(np.linspace(0, n_states - 1, count + 1)[1:]).astype(int))
    return [int(i) for i in idx]


def audit(cfg, problem, writer, plots):
    """Re-run both evolutions deterministically and audit them."""
    p = problem
    eps = cfg.study.run_eps
    tol = cfg.solver.audit_tol
    coh = evolve_cohesive(p.mesh, p.form, p.density, eps, p.loading, p.time_grid, settings=cfg.solver)
    bri = evolve_brittle(p.mesh, p.form, p.kappa, p.loading, p.time_grid, settings=cfg.solver)
    axioms = axiom_audit(p.density)
    out = {"eps": eps, "axioms": axioms.as_dict(), "checkpoints": []}
    rows = []
    ok = {"axioms": axioms.passed, "cohesive": True, "shape": True, "reformulation": True}
    for k in checkpoint_indices(len(coh), cfg.audit.checkpoints):
        sc, sb = coh.states[k], bri.states[k]
        trace_vals = p.loading.amplitude(sb.t) * p.loading.profile
        r1 = stability_audit(p.mesh, p.form, p.density, eps, sc, cohesive_competitors(p.mesh, p.form, sc, p.loading, brittle_u=sb.u, settings=cfg.solver), tol)
        r2 = shape_stability_audit(p.mesh, p.form, p.kappa, sb, p.loading, tol=tol)
        r3 = reformulation_check(p.mesh, p.form, p.kappa, sb, displacement_competitors(p.mesh, p.form, sb, trace_vals), trace_values=trace_vals)
        ok["cohesive"] &= r1.passed
        ok["shape"] &= r2.passed
        ok["reformulation"] &= r3.passed
        out["checkpoints"].append({"t": sc.t, "cohesive": r1.as_dict(), "shape": r2.as_dict(), "reformulation": r3.as_dict()})
        for name, r in (("cohesive", r1), ("shape", r2), ("reformulation", r3)):
            worst = max(r.entries, key=lambda e: e.value - e.threshold)
            rows.append((sc.t, name, r.passed, worst.name, worst.value, worst.threshold))
    writer.json("audit_report.json", out)
    writer.csv("audit_summary.csv", ("t", "audit", "passed", "worst_check", "value", "threshold"), rows)
    return {name: _check(v) for name, v in ok.items()}


def oracle(cfg, problem, writer, plots):
    """Solver versus exhaustive grid search on random tiny 1D instances."""
    oc = cfg.oracle
    rng = np.random.default_rng(cfg.solver.seed)
    rows = []
    all_ok = True
    for i in range(oc.instances):
        n = int(rng.choice(oc.nodes))
        h = 1.0 / (n - 1)
        mesh = build_mesh(1, [1.0], [n], "left", [(0.0, 1.5 * h)])
        form = assemble_dirichlet_form(mesh)
        dens = PsiFamily.from_mesh(mesh, kappa_inf=float(rng.uniform(0.5, 2.0)), rate=float(rng.uniform(0.5, 2.0)))
        eps = float(rng.choice(oc.eps))
        bv = float(rng.uniform(0.1, 1.0))
        gam = rng.uniform(0.0, bv, n) * (rng.random(n) < 0.5)
        gam[mesh.a0_nodes | mesh.gamma_nodes] = 0.0
        u = incremental_minimize(mesh, form, dens, eps, gam, bv, settings=cfg.solver)
        J = step_objective(mesh, form, dens, eps, gam, bv, u)
        _, Jstar = brute_force_step_oracle(mesh, dens, eps, gam, bv, oc.levels)
        slack = 2.0 * dens.lipschitz * (bv / (oc.levels - 1)) * float(mesh.weights.sum())
        ok = J <= Jstar + slack
        all_ok &= ok
        rows.append((i, int((~mesh.fixed_nodes).sum()), eps, oc.levels, J, Jstar, slack, ok))
    writer.csv("oracle_report.csv", ("instance", "free_nodes", "eps", "levels", "J_solver", "J_oracle", "slack", "passed"), rows)
    return {"oracle": _check(all_ok, instances=len(rows))}


_HANDLERS = {
    "run-cohesive": run_cohesive,
    "run-brittle": run_brittle,
    "limit-study": limit_study,
    "audit": audit,
    "oracle": oracle,
}


def resolve_out(cli_out, cfg):
    if cli_out:
        return cli_out
    env = os.environ.get(ENV_OUT)
    if env:
        return env
    return cfg.output.dir


def apply_overrides(cfg, seed=None, threads=None, plots=None):
    if seed is not None:
        cfg = cfg.replace(solver=cfg.solver.replace(seed=int(seed)))
    if threads is not None:
        cfg = cfg.replace(study=replace(cfg.study, threads=int(threads)))
    if plots is not None:
        cfg = cfg.replace(output=replace(cfg.output, plots=bool(plots)))
    return cfg


def _failure(out_dir, verb, code, err):
    record = {
        "verb": verb,
        "exit_code": code,
        "error_type": type(err).__name__,
        "message": str(err),
        "problems": getattr(err, "problems", None),
    }
    if isinstance(err, InternalConsistencyError):
        record["state_keys"] = sorted(err.state)
        record["t"] = err.state.get("t")
    if out_dir:
        try:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "failure.json"), "w", encoding="utf-8") as fh:
                fh.write(io.json_text(record))
        except OSError:
            pass
    print(f"debond {verb}: {type(err).__name__}: {err}", file=sys.stderr)
    return code


def run_command(verb, cfg, out=None, seed=None, threads=None, plots=None):
    """Run one verb on a parsed config; returns the exit status.

    0 all hard invariants and checks held; 1 a check failed; 2 configuration
    error; 3 runtime error. Failures leave ``failure.json`` in the output dir.
    """
    if verb not in VERBS:
        return _failure(None, verb, EXIT_CONFIG, ConfigurationError(f"unknown verb {verb!r}; choose from {VERBS}"))
    cfg = apply_overrides(cfg, seed, threads, plots)
    out_dir = resolve_out(out, cfg)
    try:
        writer = io.OutputWriter(out_dir)
    except OSError as err:
        return _failure(None, verb, EXIT_RUNTIME, err)
    start = time.perf_counter()
    try:
        problem = build_problem(cfg)
        checks = _HANDLERS[verb](cfg, problem, writer, cfg.output.plots)
    except ConfigurationError as err:
        return _failure(out_dir, verb, EXIT_CONFIG, err)
    except InternalConsistencyError as err:
        return _failure(out_dir, verb, EXIT_CHECKS, err)
    except (DebondError, ArithmeticError, RuntimeError, ValueError) as err:
        return _failure(out_dir, verb, EXIT_RUNTIME, err)
    writer.manifest(cfg.as_dict(), verb, checks, time.perf_counter() - start)
    passed = all(c["passed"] for c in checks.values())
    return EXIT_OK if passed else EXIT_CHECKS


def build_parser():
    ap = argparse.ArgumentParser(prog="debond", description=__doc__)
    ap.add_argument("verb", choices=VERBS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help=f"output directory (overrides ${ENV_OUT} and output.dir)")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--plots", choices=("on", "off"))
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigurationError as err:
        return _failure(args.out or os.environ.get(ENV_OUT), args.verb, EXIT_CONFIG, err)
    except OSError as err:
        return _failure(None, args.verb, EXIT_CONFIG, err)
    plots = None if args.plots is None else args.plots == "on"
    return run_command(args.verb, cfg, args.out, args.seed, args.threads, plots)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
