"""Minimizing-movements evolution of the rescaled cohesive debonding model.

Each step minimises ``J(v) = 0.5 v.K.v + sum_i m_i Phi(x_i, v_i / eps, gamma_i / eps)``
over nonnegative ``v`` with the prescribed trace on Gamma, then updates the
history variable ``gamma <- max(gamma, u)``. The step problem is nonconvex;
every candidate of a restart set is driven to a local minimum and the best
one is kept.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.sparse.linalg import splu

from .audit import AuditReport
from .density import CohesiveDensity
from .errors import (
    ConfigurationError,
    InternalConsistencyError,
    NonConvergenceError,
    RefusalError,
)
from .grid import (
    assemble_dirichlet_form,
    dilate,
    dirichlet_energy,
    field_distances,
    harmonic_extension,
)
from .settings import SolverSettings
from .trace import CohesiveState, EnergyLedger, EvolutionTrace, support_front

log = logging.getLogger(__name__)

_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


class StepObjective:
    """The discrete step functional for a frozen history ``gamma_prev``."""

    def __init__(self, mesh, form, density: CohesiveDensity, eps, gamma_prev, boundary_value):
        if not eps > 0:
            raise ConfigurationError("eps must be positive")
        gamma_prev = np.asarray(gamma_prev, dtype=float)
        if np.any(gamma_prev < 0):
            raise ValueError("gamma_prev must be nonnegative")
        if boundary_value < 0:
            raise ValueError("boundary_value must be nonnegative")
        self.mesh, self.form, self.density = mesh, form, density
        self.K = form.K
        self.m = mesh.weights
        self.eps = float(eps)
        self.gamma = gamma_prev
        self.z = gamma_prev / self.eps
        self.fixed = np.asarray(mesh.fixed_nodes)
        self.free = ~self.fixed
        self.fixed_values = np.where(mesh.gamma_nodes, float(boundary_value), 0.0)[self.fixed]
        self.trace = float(boundary_value)
        # v <= max trace is enforced: truncation at the maximum lowers J
        self.upper = float(boundary_value)
        self.kdiag = self.K.diagonal()
        self.hessian = _ReducedHessian(self.K)
        self.adjacency = form.adjacency

    def admissible(self, v):
        v = np.clip(np.asarray(v, dtype=float), 0.0, self.upper)
        v[self.fixed] = self.fixed_values
        return v

    def potential(self, v):
        return float(np.sum(self.m * self.density.phi(np.abs(v) / self.eps, self.z)))

    def value(self, v):
        return 0.5 * float(v @ (self.K @ v)) + self.potential(v)

    def gradient(self, v, Kv=None):
        Kv = self.K @ v if Kv is None else Kv
        return Kv + self.m * self.density.dphi_dy(v / self.eps, self.z) / self.eps

    def curvature(self, v):
        return self.m * self.density.d2phi_dy2(v / self.eps, self.z) / self.eps**2

    def nodal(self, idx, y, b):
        """Objective restricted to node ``idx`` (others frozen), up to a constant."""
        kd, m, z, nodes = self.kdiag[idx], self.m[idx], self.z[idx], idx
        if y.ndim == 2:  # rows are nodes, columns are samples
            kd, b, m, z, nodes = kd[:, None], b[:, None], m[:, None], z[:, None], idx[:, None]
        return 0.5 * kd * y * y + b * y + m * self.density.phi(y / self.eps, z, nodes=nodes)


def _factor(H):
    """Sparse LDL^T-like factorisation; returns (solver, is_positive_definite)."""
    lu = splu(
        H,
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options={"SymmetricMode": True},
    )
    return lu, bool(np.all(lu.U.diagonal() > 0))


class _ReducedHessian:
    """Assembles ``K + diag(curv)`` restricted to a node mask (identity elsewhere)
    by editing the CSC data array of ``K`` in place of sparse products."""

    def __init__(self, K):
        C = sp.csc_matrix(K)
        C.sort_indices()
        self.indices, self.indptr, self.data = C.indices, C.indptr, C.data
        self.cols = np.repeat(np.arange(C.shape[1]), np.diff(C.indptr))
        self.diagpos = np.flatnonzero(self.indices == self.cols)
        self.shape = C.shape

    def factor(self, mask, curv):
        keep = mask[self.indices] & mask[self.cols]
        data = np.where(keep, self.data, 0.0)
        data[self.diagpos] += np.where(mask, curv, 1.0)
        return _factor(sp.csc_matrix((data, self.indices, self.indptr), shape=self.shape))


def _release_layers(adj, mask, free, seed):
    """Masks grown from ``mask`` by 1, 2, 4, ... graph hops around ``seed``."""
    if not seed.any():
        return []
    hops = dijkstra(adj, unweighted=True, indices=np.flatnonzero(seed), min_only=True)
    reach = int(np.max(hops[np.isfinite(hops)]))
    out = []
    r = 1
    while r <= reach:
        out.append(mask | (free & (hops <= r)))
        r *= 2
    return out


def _newton(obj: StepObjective, v, settings, budget):
    """Projected Newton on the box [0, upper] for the free nodes.

    Uses the exact Hessian when it is positive definite on the inactive set and
    drops negative curvature otherwise. Nodes resting at 0 only feel their
    neighbours, so a free boundary would advance one node per iteration; each
    iteration therefore also tries releasing zero nodes within 1, 2, 4, ...
    hops of the support and keeps the best trial.
    Returns (v, J, iterations, converged).
    """
    K = obj.K
    adj = obj.adjacency
    free = obj.free
    U = obj.upper
    J = obj.value(v)
    ftol = settings.step_ftol
    tb = 1e-14 * (1.0 + U)
    for it in range(1, budget + 1):
        g = obj.gradient(v)
        pg = np.where(free, v - np.clip(v - g, 0.0, U), 0.0)
        if not np.any(pg):
            return v, J, it, True
        active = ((v <= tb) & (g > 0)) | ((v >= U - tb) & (g < 0))
        base = free & ~active
        if not base.any():
            return v, J, it, True
        curv = obj.curvature(v)
        masks = [base]
        if np.any(free & (v <= tb) & ~base):
            masks.extend(_release_layers(adj, base, free, free & (v > tb)))
        best = None
        misses = 0
        for mask in masks:
            trial, Jt = _newton_trial(obj, v, g, J, mask, curv, U)
            if best is None or Jt < best[1]:
                best, misses = (trial, Jt), 0
            else:
                misses += 1
                if misses == 2:
                    break
        trial, Jt = best
        if not Jt < J:
            # no descent left at working precision
            return v, J, it, True
        dec = J - Jt
        v, J = trial, Jt
        if dec <= ftol * (1.0 + abs(J)):
            return v, J, it, True
    return v, J, budget, False


def _newton_trial(obj, v, g, J, mask, curv, U):
    lu, pd = obj.hessian.factor(mask, curv)
    if not pd:
        lu, _ = obj.hessian.factor(mask, np.maximum(curv, 0.0))
    d = np.where(mask, -lu.solve(np.where(mask, g, 0.0)), 0.0)
    alpha = 1.0
    while alpha > 1e-12:
        trial = np.where(mask, np.clip(v + alpha * d, 0.0, U), v)
        Jt = obj.value(trial)
        if Jt <= J + 1e-4 * float(g @ (trial - v)):
            return trial, Jt
        alpha *= 0.5
    return v, J


def _golden_min(f, lo, hi, iters=45):
    """Vectorised golden-section search of ``f`` on ``[lo, hi]`` (elementwise)."""
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc < fd
        # left: keep [a, d], old c becomes new d; else keep [c, b], old d becomes new c
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        x = np.where(left, b - _GOLDEN * (b - a), a + _GOLDEN * (b - a))
        fx = f(x)
        c, d, fc, fd = (
            np.where(left, x, d),
            np.where(left, c, x),
            np.where(left, fx, fd),
            np.where(left, fc, fx),
        )
    x = 0.5 * (a + b)
    return x, f(x)


def _piece_min(f, lo, hi, samples=33):
    """Global minimum of a 1D function on each ``[lo_i, hi_i]`` by sampling plus golden refinement."""
    s = np.linspace(0.0, 1.0, samples)
    pts = lo[:, None] + (hi - lo)[:, None] * s[None, :]
    vals = f(pts)
    k = np.argmin(vals, axis=1)
    rows = np.arange(lo.size)
    best_x, best_f = pts[rows, k], vals[rows, k]
    a = pts[rows, np.maximum(k - 1, 0)]
    b = pts[rows, np.minimum(k + 1, samples - 1)]
    x, fx = _golden_min(f, a, b)
    better = fx < best_f
    return np.where(better, x, best_x), np.where(better, fx, best_f)


def _nodal_sweep(obj: StepObjective, v):
    """One red-black sweep of exact nodewise minimisation (global on each node)."""
    colors = obj.form.colors
    diag = obj.kdiag
    for c in range(int(colors.max()) + 1):
        idx = np.flatnonzero((colors == c) & obj.free)
        if idx.size == 0:
            continue
        Kv = obj.K @ v
        b = Kv[idx] - diag[idx] * v[idx]

        def f(y, idx=idx, b=b):
            return obj.nodal(idx, y, b)

        gam = np.clip(obj.gamma[idx], 0.0, obj.upper)
        zeros = np.zeros(idx.size)
        x1, f1 = _piece_min(f, zeros, gam)  # unloading branch
        x2, f2 = _piece_min(f, gam, np.full(idx.size, obj.upper))  # loading branch
        x = np.where(f1 <= f2, x1, x2)
        fx = np.minimum(f1, f2)
        cur = f(v[idx])
        v[idx] = np.where(fx < cur, x, v[idx])
    return v


def local_minimize(obj: StepObjective, v0, settings: SolverSettings):
    """Alternate projected Newton and exact nodal sweeps until neither improves J."""
    v = obj.admissible(v0)
    budget = settings.step_max_sweeps
    used = 0
    J = obj.value(v)
    while used < budget:
        v, J, it, ok = _newton(obj, v, settings, budget - used)
        used += it
        if not ok:
            return v, J, used, False
        swept = _nodal_sweep(obj, v.copy())
        used += 1
        Js = obj.value(swept)
        if J - Js <= settings.step_ftol * (1.0 + abs(J)):
            return v, J, used, True
        v, J = swept, Js
    return v, J, used, False


@dataclass
class StepResult:
    u: np.ndarray
    objective: float
    chosen: str
    iterations: int
    candidates: dict


def front_sets(mesh, n):
    """``n`` nested sets ``A0 u {dist(x, Gamma) < r}`` with evenly spaced radii."""
    d = mesh.distance_to_gamma()
    radii = np.linspace(mesh.r0, d.max() + mesh.cell_size, n + 2)[1:-1]
    return [mesh.a0_nodes | (d < r) for r in radii]


def default_restarts(mesh, form, boundary_value, settings):
    cands = [
        ("a0", harmonic_extension(mesh, form, mesh.a0_nodes, boundary_value, settings.harmonic_rtol)),
        ("all", harmonic_extension(mesh, form, np.ones(mesh.n_nodes, bool), boundary_value, settings.harmonic_rtol)),
        ("lift", np.where(mesh.gamma_nodes, boundary_value, 0.0)),
    ]
    for k, A in enumerate(front_sets(mesh, settings.front_restarts)):
        cands.append((f"front{k}", harmonic_extension(mesh, form, A, boundary_value, settings.harmonic_rtol)))
    return cands


def minimize_step(mesh, form, density, eps, gamma_prev, boundary_value, restarts=None, u_prev=None, settings=None):
    """Solve one minimizing-movements step from every restart candidate.

    The lowest objective wins; near-ties go to the candidate closest (in H1)
    to ``u_prev``.
    """
    settings = settings or SolverSettings()
    obj = StepObjective(mesh, form, density, eps, gamma_prev, boundary_value)
    if restarts is None:
        restarts = default_restarts(mesh, form, boundary_value, settings)
        if u_prev is not None:
            restarts.insert(0, ("previous", np.asarray(u_prev, dtype=float)))
    results = []
    seen = []
    total_it = 0
    for name, start in restarts:
        start = obj.admissible(start)
        if any(np.array_equal(start, s) for s in seen):
            continue
        seen.append(start)
        v, J, it, ok = local_minimize(obj, start, settings)
        total_it += it
        results.append((name, v, J, ok))
    good = [r for r in results if r[3]]
    if not good:
        best = min(results, key=lambda r: r[2])
        raise NonConvergenceError("no restart candidate converged", best=best[1], objective=best[2])
    Jmin = min(r[2] for r in good)
    tie = [r for r in good if r[2] <= Jmin + settings.step_ftol * (1.0 + abs(Jmin))]
    if u_prev is not None and len(tie) > 1:
        tie.sort(key=lambda r: field_distances(mesh, form, r[1], u_prev)[1])
    name, v, J, _ = tie[0]
    return StepResult(u=v, objective=J, chosen=name, iterations=total_it, candidates={r[0]: r[2] for r in results})


def incremental_minimize(mesh, form, density, eps, gamma_prev, boundary_value, restarts=None, u_prev=None, settings=None):
    """Minimiser of the step functional (best local minimum over the restart set)."""
    return minimize_step(mesh, form, density, eps, gamma_prev, boundary_value, restarts, u_prev, settings).u


def step_objective(mesh, form, density, eps, gamma_prev, boundary_value, v):
    return StepObjective(mesh, form, density, eps, gamma_prev, boundary_value).value(np.asarray(v, dtype=float))


def gamma_update(gamma_prev, u):
    return np.maximum(np.asarray(gamma_prev, dtype=float), np.abs(np.asarray(u, dtype=float)))


def cohesive_potential(mesh, density, eps, u, gamma):
    return float(np.sum(mesh.weights * density.phi(np.abs(u) / eps, np.asarray(gamma) / eps)))


def eps_threshold(eps, delta_exponent):
    """``eps * delta_eps`` for ``delta_eps = eps ** -delta_exponent``."""
    return eps * eps ** (-delta_exponent)


def _restart_set(mesh, form, loading, lam, dlam, u_prev, gamma_prev, eps, settings):
    g = loading.profile
    cands = []
    sets = []
    thr = eps_threshold(eps, settings.delta_exponent)
    eps_set = mesh.a0_nodes | (gamma_prev >= thr)
    for kind in settings.restarts:
        if kind == "increment":
            cands.append((kind, u_prev + dlam * g))
        elif kind == "previous":
            cands.append((kind, u_prev))
        elif kind == "lift":
            cands.append((kind, lam * g))
        elif kind == "eps_set":
            sets.append((kind, eps_set))
        elif kind == "eps_dilated":
            sets.append((kind, dilate(mesh, eps_set, eps)))
        elif kind == "a0":
            sets.append((kind, mesh.a0_nodes))
    for k, A in enumerate(front_sets(mesh, settings.front_restarts)):
        sets.append((f"front{k}", A))
    done = []
    for kind, A in sets:
        if any(np.array_equal(A, B) for B in done):
            continue
        done.append(A)
        cands.append((kind, harmonic_extension(mesh, form, A, lam, settings.harmonic_rtol, settings.harmonic_iter_factor)))
    return cands


def _check_state(mesh, loading, lam, u, gamma, gamma_prev, M, tol=1e-9):
    problems = []
    if np.any(gamma < gamma_prev):
        problems.append("history decreased")
    if np.any(u < -tol) or np.any(u > M + tol):
        problems.append("displacement outside [0, M]")
    if np.any(gamma < u):
        problems.append("gamma < u")
    if np.any(u[mesh.gamma_nodes] != lam * loading.profile[mesh.gamma_nodes]):
        problems.append("Gamma trace not matched")
    if np.any(u[mesh.clamp_nodes] != 0.0):
        problems.append("clamped edge displaced")
    return problems


def evolve_cohesive(mesh, form, density, eps, loading, time_grid, initial_state=None, settings=None):
    """Run the minimizing-movements scheme on ``time_grid``.

    Raises ``InternalConsistencyError`` (with a state dump) if an invariant of
    the discrete solution is violated.
    """
    settings = settings or SolverSettings()
    times = time_grid.times
    if times[-1] > loading.T + 1e-12:
        raise ConfigurationError("time grid extends beyond the loading horizon")
    n = mesh.n_nodes
    lam0 = loading.amplitude(times[0])
    if initial_state is None:
        if lam0 != 0.0:
            raise ConfigurationError(
                "the zero initial state is globally stable and well prepared only if w(0) = 0 on Gamma"
            )
        u, gamma = np.zeros(n), np.zeros(n)
    else:
        u = np.asarray(initial_state.u, dtype=float).copy()
        gamma = np.asarray(initial_state.gamma, dtype=float).copy()
        if np.any(gamma < u) or np.any(u < 0):
            raise ConfigurationError("initial state must satisfy gamma >= u >= 0")
        if np.any(u[mesh.gamma_nodes] != lam0 * loading.profile[mesh.gamma_nodes]):
            raise ConfigurationError("initial displacement does not match the Gamma trace")

    M = loading.ceiling
    Kg = form.K @ loading.profile
    pos_tol = settings.positivity_tol * max(M, 1.0)
    ledger = EnergyLedger()
    ledger.append(times[0], dirichlet_energy(form, u), cohesive_potential(mesh, density, eps, u, gamma), 0.0, 0.0)
    states = [CohesiveState(float(times[0]), u.copy(), gamma.copy(), eps)]
    fronts = [support_front(mesh, mesh.a0_nodes | (gamma > pos_tol))]
    chosen = []
    lam_prev = lam0
    for t in times[1:]:
        lam = loading.amplitude(t)
        dlam = lam - lam_prev
        cands = _restart_set(mesh, form, loading, lam, dlam, u, gamma, eps, settings)
        res = minimize_step(mesh, form, density, eps, gamma, lam, restarts=cands, u_prev=u, settings=settings)
        u_new = res.u
        gamma_new = gamma_update(gamma, u_new)
        problems = _check_state(mesh, loading, lam, u_new, gamma_new, gamma, M)
        P_old_hist = density.phi(u_new / eps, gamma / eps)
        P_new_hist = density.phi(u_new / eps, gamma_new / eps)
        if np.max(np.abs(P_old_hist - P_new_hist), initial=0.0) > 1e-12:
            problems.append("potential depends on the history update (Phi4)")
        if problems:
            raise InternalConsistencyError(
                f"cohesive invariant violated at t={t}: {problems}",
                state={"t": float(t), "u": u_new, "gamma": gamma_new, "gamma_prev": gamma},
            )
        dw = dlam * float(Kg @ u)
        dw_trap = dlam * 0.5 * float(Kg @ (u + u_new))
        u, gamma, lam_prev = u_new, gamma_new, lam
        ledger.append(t, dirichlet_energy(form, u), float(np.sum(mesh.weights * P_new_hist)), dw, dw_trap)
        states.append(CohesiveState(float(t), u.copy(), gamma.copy(), eps))
        fronts.append(support_front(mesh, mesh.a0_nodes | (gamma > pos_tol)))
        chosen.append(res.chosen)
    return EvolutionTrace(
        kind="cohesive",
        mesh=mesh,
        states=states,
        ledger=ledger,
        front=fronts,
        meta={"eps": float(eps), "chosen": chosen, "ceiling": M},
    )


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------


def _bumps(mesh, centers, radius):
    x = mesh.coords
    out = []
    for c in centers:
        b = np.clip(1.0 - np.linalg.norm(x - x[c], axis=1) / radius, 0.0, None)
        b[mesh.fixed_nodes] = 0.0
        if b.any():
            out.append(b)
    return out


def cohesive_competitors(mesh, form, state, loading, brittle_u=None, settings=None):
    """Library of trace-compatible competitors for the stability audit."""
    settings = settings or SolverSettings()
    lam = loading.amplitude(state.t)
    g = loading.profile
    u = state.u
    trace = mesh.gamma_nodes
    comps = [("self", u.copy())]
    for a in (0.5, 1.0, 2.0):
        v = a * lam * g
        v[trace] = lam * g[trace]
        comps.append((f"lift x{a}", v))
    thr = eps_threshold(state.eps, settings.delta_exponent)
    eps_set = mesh.a0_nodes | (state.gamma >= thr)
    h = mesh.cell_size
    for name, A in [("A0", mesh.a0_nodes), ("A_eps", eps_set)] + [
        (f"A_eps+{r:.3g}", dilate(mesh, eps_set, r)) for r in (h, 5 * h, state.eps)
    ]:
        comps.append((f"harmonic {name}", harmonic_extension(mesh, form, A, lam, settings.harmonic_rtol)))
    if brittle_u is not None:
        comps.append(("brittle", np.asarray(brittle_u, dtype=float)))
    top = float(u.max())
    for c in (0.25, 0.5, 0.75):
        v = np.minimum(u, c * top)
        v[trace] = u[trace]
        comps.append((f"truncate {c}", v))
    d = mesh.distance_to_gamma()
    support = np.flatnonzero(u > 0)
    far = int(support[np.argmax(d[support])]) if support.size else int(np.argmax(d))
    centers = sorted({far, int(np.argmin(np.abs(d - 0.5 * d[far]))), int(np.argmin(np.abs(d - 0.5 * d.max())))})
    for b in _bumps(mesh, centers, 3 * h):
        for s in (1e-3, 0.1):
            comps.append((f"bump +{s}", np.maximum(u + s * b, 0.0)))
            comps.append((f"bump -{s}", np.maximum(u - s * b, 0.0)))
    return comps


def stability_audit(mesh, form, density, eps, state, competitor_set, tol=1e-9):
    """Sampled global-stability check: ``J(u) - J(v) <= tol (1 + |J(u)|)`` for each competitor."""
    lam_trace = state.u[mesh.gamma_nodes]
    obj = StepObjective(mesh, form, density, eps, state.gamma, float(lam_trace.max()) if lam_trace.size else 0.0)
    Ju = obj.value(state.u)
    report = AuditReport(f"cohesive stability t={state.t:.6g}")
    thr = tol * (1.0 + abs(Ju))
    for name, v in competitor_set:
        v = np.asarray(v, dtype=float)
        if not np.allclose(v[mesh.gamma_nodes], lam_trace, rtol=0, atol=1e-14) or np.any(v[mesh.clamp_nodes] != 0):
            raise ValueError(f"competitor {name!r} does not match the Gamma trace")
        report.add(name, Ju - obj.value(v), thr)
    return report


# ---------------------------------------------------------------------------
# Exhaustive oracle for tiny instances
# ---------------------------------------------------------------------------

_ENUM_LIMIT = 2_000_000


def _is_path(K):
    A = sp.triu(K, k=1).tocoo()
    return bool(np.all(A.col == A.row + 1))


def brute_force_step_oracle(tiny_mesh, density, eps, gamma_prev, boundary_value, value_grid, method="auto"):
    """Exact minimum of the step functional over a nodal value grid.

    Free nodes take values in ``value_grid`` (an int number of levels in
    ``[0, boundary_value]`` or an explicit array); Gamma nodes carry the trace.
    Path graphs (1D) are scanned by dynamic programming over the chain, which
    is exhaustive; other graphs by full enumeration. Ties resolve to the
    lexicographically smallest assignment.
    """
    mesh = tiny_mesh
    form = assemble_dirichlet_form(mesh)
    K = form.K
    free = np.flatnonzero(~mesh.fixed_nodes)
    if free.size > 6:
        raise RefusalError(f"oracle limited to 6 free nodes (got {free.size})")
    if np.isscalar(value_grid):
        levels = int(value_grid)
        if levels > 101 or levels < 1:
            raise RefusalError("oracle value grid limited to 101 levels")
        grid = np.linspace(0.0, float(boundary_value), levels)
    else:
        grid = np.asarray(value_grid, dtype=float)
        if grid.size > 101:
            raise RefusalError("oracle value grid limited to 101 levels")
    gamma_prev = np.asarray(gamma_prev, dtype=float)
    n = mesh.n_nodes
    fixed_vals = np.where(mesh.gamma_nodes, float(boundary_value), 0.0)
    allowed = [np.array([fixed_vals[i]]) if mesh.fixed_nodes[i] else grid for i in range(n)]

    def unary(i, vals):
        return 0.5 * K[i, i] * vals**2 + mesh.weights[i] * density.phi(
            np.abs(vals) / eps, np.full(vals.shape, gamma_prev[i] / eps), nodes=np.full(vals.shape, i)
        )

    use_dp = method == "dp" or (method == "auto" and _is_path(K))
    if use_dp:
        if not _is_path(K):
            raise RefusalError("dynamic programming requires a path graph")
        cost = [None] * n
        cost[n - 1] = unary(n - 1, allowed[n - 1])
        for i in range(n - 2, -1, -1):
            pair = K[i, i + 1] * np.outer(allowed[i], allowed[i + 1])
            cost[i] = unary(i, allowed[i]) + np.min(pair + cost[i + 1][None, :], axis=1)
        choice = [int(np.argmin(cost[0]))]
        for i in range(n - 1):
            a = allowed[i][choice[-1]]
            row = K[i, i + 1] * a * allowed[i + 1] + cost[i + 1]
            choice.append(int(np.argmin(row)))
        v = np.array([allowed[i][c] for i, c in enumerate(choice)])
    else:
        total = grid.size ** free.size
        if total > _ENUM_LIMIT:
            raise RefusalError(f"enumeration of {total} assignments refused")
        combos = np.array(list(itertools.product(range(grid.size), repeat=free.size)), dtype=int)
        V = np.tile(fixed_vals, (combos.shape[0], 1))
        V[:, free] = grid[combos]
        quad = 0.5 * np.einsum("ij,ij->i", V, (K @ V.T).T)
        Z = np.broadcast_to(gamma_prev / eps, V.shape)
        pot = (mesh.weights[None, :] * density.phi(np.abs(V) / eps, Z, nodes=np.broadcast_to(np.arange(n), V.shape))).sum(axis=1)
        v = V[int(np.argmin(quad + pot))]
    J = step_objective(mesh, form, density, eps, gamma_prev, boundary_value, v)
    return v, J
