"""Sweeps of the rescaled cohesive model towards the brittle limit."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .brittle import evolve_brittle, irreversible_support
from .cohesive import evolve_cohesive
from .errors import ConfigurationError, RefusalError
from .grid import dilate, field_distances
from .settings import SolverSettings


@dataclass(frozen=True)
class EpsSchedule:
    """Strictly decreasing ``eps`` values with ``delta_eps = eps ** -exponent``."""

    eps: tuple
    delta_exponent: float = 0.5

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps)
        object.__setattr__(self, "eps", eps)
        problems = []
        if any(not (e > 0) for e in eps):
            problems.append("every eps must be positive")
        elif any(b >= a for a, b in zip(eps, eps[1:])):
            problems.append("eps values must decrease strictly")
        if not 0.0 < self.delta_exponent < 1.0:
            problems.append("delta_eps = eps^-p needs 0 < p < 1 so that delta -> inf and eps*delta -> 0")
        if problems:
            raise ConfigurationError("; ".join(problems), problems)
        d = self.deltas
        thr = self.thresholds
        if any(b <= a for a, b in zip(d, d[1:])) or any(b >= a for a, b in zip(thr, thr[1:])):
            raise ConfigurationError("delta rule must make delta increase and eps*delta decrease")

    def delta(self, eps):
        return float(eps) ** (-self.delta_exponent)

    @property
    def deltas(self):
        return tuple(self.delta(e) for e in self.eps)

    @property
    def thresholds(self):
        return tuple(e * self.delta(e) for e in self.eps)

    def __len__(self):
        return len(self.eps)


def eps_debonded_set(mesh, gamma_field, eps, delta):
    """``A0`` joined with ``{gamma >= eps * delta}``."""
    gamma_field = np.asarray(gamma_field, dtype=float)
    if np.any(gamma_field < 0):
        raise ValueError("gamma must be nonnegative")
    if not (eps > 0 and delta > 0):
        raise ValueError("eps and delta must be positive")
    return mesh.a0_nodes | (gamma_field >= eps * delta)


def well_prepared_value(mesh, density, eps, u0, gamma0):
    """Lumped integral of the rescaled potential at the initial state."""
    u0 = np.asarray(u0, dtype=float)
    gamma0 = np.asarray(gamma0, dtype=float)
    if np.any(u0 < 0) or np.any(gamma0 < u0):
        raise ValueError("need gamma0 >= u0 >= 0")
    return float(np.sum(mesh.weights * density.phi(u0 / eps, gamma0 / eps)))


@dataclass
class EpsComparison:
    eps: float
    delta: float
    h1: float
    setdiff: float
    gap: float
    well_prepared: float
    monotonicity_violations: int
    inclusion_violations: int
    per_time: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "eps": self.eps,
            "delta": self.delta,
            "h1": self.h1,
            "setdiff": self.setdiff,
            "gap": self.gap,
            "well_prepared": self.well_prepared,
            "monotonicity_violations": self.monotonicity_violations,
            "inclusion_violations": self.inclusion_violations,
        }


@dataclass
class ConvergenceReport:
    delta_exponent: float
    entries: list = field(default_factory=list)
    brittle_h1_sup: float = 0.0
    brittle_inclusion_violations: int = 0
    sensitivity: dict = field(default_factory=dict)

    @property
    def eps(self):
        return [e.eps for e in self.entries]

    def column(self, name):
        return [getattr(e, name) for e in self.entries]

    def as_dict(self):
        return {
            "delta_exponent": self.delta_exponent,
            "brittle_h1_sup": self.brittle_h1_sup,
            "brittle_inclusion_violations": self.brittle_inclusion_violations,
            "entries": [e.as_dict() for e in self.entries],
            "sensitivity": {f"{p:g}": [e.as_dict() for e in rows] for p, rows in sorted(self.sensitivity.items())},
        }


def _check_compatible(brittle, cohesive):
    if brittle.mesh is not cohesive.mesh and not (
        brittle.mesh.coords.shape == cohesive.mesh.coords.shape and np.array_equal(brittle.mesh.coords, cohesive.mesh.coords)
    ):
        raise ConfigurationError("brittle and cohesive traces live on different meshes")
    if not np.array_equal(brittle.times, cohesive.times):
        raise ConfigurationError("brittle and cohesive traces use different time grids")


def compare_traces(form, density, kappa, brittle, cohesive, eps, delta):
    """Distances between one cohesive run and the brittle reference."""
    _check_compatible(brittle, cohesive)
    mesh = brittle.mesh
    m = mesh.weights
    thr = eps * delta
    h1, sd, gap = [], [], []
    mono = 0
    incl = 0
    prev = None
    for sb, sc in zip(brittle.states, cohesive.states):
        A_eps = eps_debonded_set(mesh, sc.gamma, eps, delta)
        if prev is not None:
            mono += int(np.count_nonzero(prev & ~A_eps))
        prev = A_eps
        incl += int(np.count_nonzero((sc.u >= thr) & ~A_eps))
        h1.append(field_distances(mesh, form, sc.u, sb.u)[1])
        sd.append(float(np.sum(m * (A_eps ^ sb.A))))
        P = float(np.sum(m * density.phi(sc.u / eps, sc.gamma / eps)))
        D = float(np.sum(m[sb.A & ~mesh.a0_nodes] * kappa[sb.A & ~mesh.a0_nodes]))
        gap.append(abs(P - D))
    s0 = cohesive.states[0]
    return EpsComparison(
        eps=float(eps),
        delta=float(delta),
        h1=max(h1),
        setdiff=max(sd),
        gap=max(gap),
        well_prepared=well_prepared_value(mesh, density, eps, s0.u, s0.gamma),
        monotonicity_violations=mono,
        inclusion_violations=incl,
        per_time={"h1": h1, "setdiff": sd, "gap": gap},
    )


def brittle_inclusion_violations(form, brittle, positivity_tol):
    """Nodes of the irreversible positivity set outside ``A(t)`` dilated by one cell."""
    mesh = brittle.mesh
    supports = irreversible_support(brittle, positivity_tol)
    bad = 0
    for s, Au in zip(brittle.states, supports):
        bad += int(np.count_nonzero(Au & ~dilate(mesh, s.A, mesh.cell_size)))
    return bad


@dataclass
class StudySetup:
    mesh: object
    form: object
    density: object
    kappa: np.ndarray
    loading: object
    time_grid: object
    schedule: EpsSchedule
    settings: SolverSettings = field(default_factory=SolverSettings)
    sensitivity_exponents: tuple = ()
    threads: int = 1


def _run_all(setup, eps_list, threads):
    def one(eps):
        return evolve_cohesive(setup.mesh, setup.form, setup.density, eps, setup.loading, setup.time_grid, settings=setup.settings)

    if threads > 1 and len(eps_list) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, eps_list))
    return [one(e) for e in eps_list]


def convergence_study(setup: StudySetup, brittle=None, cohesive_traces=None):
    """Run (or reuse) the brittle reference and one cohesive run per eps, then compare.

    Reduction happens in schedule order, so the report does not depend on
    ``threads``. Returns ``(report, brittle_trace, cohesive_traces)``.
    """
    sched = setup.schedule
    if brittle is None:
        brittle = evolve_brittle(setup.mesh, setup.form, setup.kappa, setup.loading, setup.time_grid, settings=setup.settings)
    if cohesive_traces is None:
        cohesive_traces = _run_all(setup, list(sched.eps), setup.threads)
    if len(cohesive_traces) != len(sched):
        raise ConfigurationError("one cohesive trace per eps is required")
    report = ConvergenceReport(delta_exponent=sched.delta_exponent)
    zero = np.zeros(setup.mesh.n_nodes)
    report.brittle_h1_sup = max(field_distances(setup.mesh, setup.form, s.u, zero)[1] for s in brittle.states)
    tol = setup.settings.positivity_tol * max(setup.loading.ceiling, 1.0)
    report.brittle_inclusion_violations = brittle_inclusion_violations(setup.form, brittle, tol)
    for eps, tr in zip(sched.eps, cohesive_traces):
        report.entries.append(compare_traces(setup.form, setup.density, setup.kappa, brittle, tr, eps, sched.delta(eps)))
    for p in setup.sensitivity_exponents:
        alt = EpsSchedule(sched.eps, p)
        report.sensitivity[float(p)] = [
            compare_traces(setup.form, setup.density, setup.kappa, brittle, tr, eps, alt.delta(eps))
            for eps, tr in zip(alt.eps, cohesive_traces)
        ]
    return report, brittle, cohesive_traces


RATE_COLUMNS = ("eps", "h1", "setdiff", "gap", "order_h1", "order_setdiff", "order_gap")


def _order(e_prev, e, eps_prev, eps):
    if e_prev <= 0 or e <= 0:
        return "NA"
    return math.log(e_prev / e) / math.log(eps_prev / eps)


def rate_table(report):
    """Rows ``(eps, h1, setdiff, gap, order_h1, order_setdiff, order_gap)``.

    Orders compare consecutive rows; the first row and zero errors get "NA".
    """
    entries = report.entries if isinstance(report, ConvergenceReport) else list(report)
    if len(entries) < 2:
        raise RefusalError("a rate table needs at least two eps entries")
    rows = []
    for i, e in enumerate(entries):
        if i == 0:
            orders = ["NA"] * 3
        else:
            p = entries[i - 1]
            orders = [_order(getattr(p, k), getattr(e, k), p.eps, e.eps) for k in ("h1", "setdiff", "gap")]
        rows.append((e.eps, e.h1, e.setdiff, e.gap, *orders))
    return rows
