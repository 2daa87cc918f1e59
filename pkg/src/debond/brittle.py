"""Brittle debonding as an incremental shape evolution.

A step chooses a debonded set ``A >= A_prev`` minimising
``E(t, A) + sum_{A \\ A_prev} m_i kappa_i``, where ``E(t, A)`` is the Dirichlet
energy of the harmonic extension of the Gamma trace that vanishes off ``A``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cholesky_banded, solve_banded

from .audit import AuditReport
from .density import check_toughness
from .errors import ConfigurationError
from .grid import dilate, dirichlet_energy, field_distances, frontier, gamma_trace, harmonic_extension
from .settings import SolverSettings
from .trace import BrittleState, EnergyLedger, EvolutionTrace, support_front

STRATEGIES = ("auto", "exact-1d", "greedy-2d")


def shape_energy(mesh, form, A, gamma_values, rtol=1e-10):
    """Return ``(E, h)``: the minimal Dirichlet energy on ``A`` and its minimiser."""
    h = harmonic_extension(mesh, form, A, gamma_values, rtol=rtol)
    return dirichlet_energy(form, h), h


def brittle_step_1d(l_prev, w_value, kappa):
    """Front minimising ``w^2 / (2 l) + kappa (l - l_prev)`` over ``l >= l_prev``.

    Not clamped to a domain length; use :func:`clamp_front` for that.
    """
    if not l_prev > 0:
        raise ValueError("l_prev must be positive")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    if w_value < 0:
        raise ValueError("w_value must be nonnegative")
    return max(float(l_prev), float(w_value) / np.sqrt(2.0 * kappa))


def clamp_front(front, length):
    return min(front, length)


def toughness_cost(mesh, kappa, new_nodes):
    return float(np.sum(mesh.weights[new_nodes] * kappa[new_nodes]))


class _PrefixScan:
    """Shape energies of every prefix set in 1D via one banded Cholesky factor.

    With free nodes ordered by distance from Gamma, the stiffness block of a
    prefix is the leading block of ``K_FF``; its Cholesky factor is the leading
    block of the full factor, so all prefix energies follow from one forward
    substitution.
    """

    def __init__(self, mesh, form):
        # clamped nodes stay at zero and never debond, so they drop out
        keep = np.flatnonzero(~mesh.clamp_nodes)
        n = keep.size
        order = keep[np.argsort(mesh.distance_to_gamma()[keep], kind="stable")]
        self.order = order
        self.gamma_pos = mesh.gamma_nodes[order]
        if not np.all(self.gamma_pos[: int(self.gamma_pos.sum())]):
            raise ConfigurationError("exact-1d scan needs Gamma at one end of the interval")
        self.n_gamma = int(self.gamma_pos.sum())
        K = form.K.tocsr()[order][:, order]
        g = self.n_gamma
        Kff = K[g:, g:]
        m = n - g
        ab = np.zeros((2, m))
        ab[0] = Kff.diagonal()
        ab[1, :-1] = Kff.diagonal(-1)
        self.L = cholesky_banded(ab, lower=True)
        self.Kfg = K[g:, :g]
        self.Kgg = K[:g, :g]

    def energies(self, trace_values):
        """``E[j]`` = energy when the first ``j`` free nodes (by distance) are in the set."""
        vg = np.asarray(trace_values, dtype=float)
        b = self.Kfg @ vg
        # lower-form Cholesky storage coincides with solve_banded's (1, 0) layout
        y = solve_banded((1, 0), self.L, b)
        e0 = 0.5 * float(vg @ (self.Kgg @ vg))
        return np.concatenate([[e0], e0 - 0.5 * np.cumsum(y * y)])


def _resolve_strategy(mesh, strategy):
    if strategy not in STRATEGIES:
        raise ConfigurationError(f"unknown brittle strategy {strategy!r}; choose from {STRATEGIES}")
    if strategy == "auto":
        return "exact-1d" if mesh.dimension == 1 else "greedy-2d"
    if strategy == "exact-1d" and mesh.dimension != 1:
        raise ConfigurationError("strategy 'exact-1d' requires a 1D mesh")
    if strategy == "greedy-2d" and mesh.dimension != 2:
        raise ConfigurationError("strategy 'greedy-2d' requires a 2D mesh")
    return strategy


def _objective(mesh, form, kappa, A, A_prev, trace, rtol):
    E, h = shape_energy(mesh, form, A, trace, rtol)
    return E + toughness_cost(mesh, kappa, A & ~A_prev), E, h


def _exact_1d(mesh, form, kappa, A_prev, trace, scan, rtol):
    order = scan.order
    g = scan.n_gamma
    free_order = order[g:]
    in_prev = A_prev[free_order]
    # A_prev is a prefix iff its free part is a leading run in distance order
    k0 = int(np.argmin(in_prev)) if not in_prev.all() else in_prev.size
    vg = gamma_trace(mesh, trace)[order[:g]]
    cost = np.concatenate([[0.0], np.cumsum(mesh.weights[free_order] * kappa[free_order])])
    if not in_prev[k0:].any():
        E = scan.energies(vg)
        total = E[k0:] + (cost[k0:] - cost[k0])
        j = k0 + int(np.argmin(total))  # argmin returns the first (smallest front) on ties
        A = A_prev.copy()
        A[free_order[:j]] = True
        return A
    # A_prev is not a prefix: evaluate the candidates one by one
    best, best_val = A_prev.copy(), None
    for j in range(k0, free_order.size + 1):
        A = A_prev.copy()
        A[free_order[:j]] = True
        val, _, _ = _objective(mesh, form, kappa, A, A_prev, trace, rtol)
        if best_val is None or val < best_val:
            best, best_val = A, val
    return best


def _greedy_2d(mesh, form, kappa, A_prev, trace, layers, rtol):
    A = A_prev.copy()
    val, _, _ = _objective(mesh, form, kappa, A, A_prev, trace, rtol)
    h = mesh.cell_size
    while True:
        cands = []
        for i in np.flatnonzero(frontier(form, A) & ~mesh.clamp_nodes):
            B = A.copy()
            B[i] = True
            cands.append(B)
        ring = A.copy()
        for _ in range(max(int(layers), 1)):
            ring = ring | (frontier(form, ring) & ~mesh.clamp_nodes)
            cands.append(ring.copy())
        for r in (2.0 * h, 4.0 * h):
            cands.append(dilate(mesh, A, r) & ~mesh.clamp_nodes)
        best, best_val = None, val
        for B in cands:
            if np.array_equal(B, A):
                continue
            v, _, _ = _objective(mesh, form, kappa, B, A_prev, trace, rtol)
            if v < best_val - 1e-14 * (1.0 + abs(best_val)):
                best, best_val = B, v
        if best is None:
            return A
        A, val = best, best_val


def brittle_step_discrete(mesh, form, kappa, A_prev, gamma_values, strategy="auto", settings=None, _scan=None):
    """Debonded set after one step; always contains ``A_prev``."""
    settings = settings or SolverSettings()
    strategy = _resolve_strategy(mesh, strategy)
    A_prev = np.asarray(A_prev, dtype=bool)
    if not np.all(A_prev[mesh.a0_nodes]):
        raise ValueError("A_prev must contain A0")
    kappa = np.asarray(kappa, dtype=float)
    if strategy == "exact-1d":
        scan = _scan or _PrefixScan(mesh, form)
        return _exact_1d(mesh, form, kappa, A_prev, gamma_values, scan, settings.harmonic_rtol)
    return _greedy_2d(mesh, form, kappa, A_prev, gamma_values, settings.greedy_layers, settings.harmonic_rtol)


def dissipation(mesh, kappa, A):
    A = np.asarray(A, dtype=bool)
    return toughness_cost(mesh, kappa, A & ~mesh.a0_nodes)


def evolve_brittle(mesh, form, kappa, loading, time_grid, A_init=None, settings=None):
    """Incremental shape evolution on ``time_grid`` starting from ``A_init = A0``."""
    settings = settings or SolverSettings()
    check_toughness(mesh, kappa)
    kappa = np.asarray(kappa, dtype=float)
    strategy = _resolve_strategy(mesh, settings.brittle_strategy)
    times = time_grid.times
    if times[-1] > loading.T + 1e-12:
        raise ConfigurationError("time grid extends beyond the loading horizon")
    A = mesh.a0_nodes.copy() if A_init is None else np.asarray(A_init, dtype=bool).copy()
    if not np.array_equal(A, mesh.a0_nodes):
        raise ConfigurationError("the brittle evolution starts from A(0) = A0")
    scan = _PrefixScan(mesh, form) if strategy == "exact-1d" else None
    g = loading.profile
    Kg = form.K @ g
    rtol = settings.harmonic_rtol

    lam = loading.amplitude(times[0])
    E, u = shape_energy(mesh, form, A, lam * g, rtol)
    ledger = EnergyLedger()
    ledger.append(times[0], E, dissipation(mesh, kappa, A), 0.0, 0.0)
    states = [BrittleState(float(times[0]), A.copy(), u)]
    fronts = [support_front(mesh, A)]
    for t in times[1:]:
        lam_new = loading.amplitude(t)
        A_new = brittle_step_discrete(mesh, form, kappa, A, lam_new * g, strategy, settings, _scan=scan)
        if not np.all(A_new[A]):
            raise AssertionError("brittle step lost debonded nodes")
        E, u_new = shape_energy(mesh, form, A_new, lam_new * g, rtol)
        dlam = lam_new - lam
        dw = dlam * float(Kg @ u)
        dw_trap = dlam * 0.5 * float(Kg @ (u + u_new))
        A, u, lam = A_new, u_new, lam_new
        ledger.append(t, E, dissipation(mesh, kappa, A), dw, dw_trap)
        states.append(BrittleState(float(t), A.copy(), u))
        fronts.append(support_front(mesh, A))
    return EvolutionTrace(
        kind="brittle",
        mesh=mesh,
        states=states,
        ledger=ledger,
        front=fronts,
        meta={"strategy": strategy, "ceiling": loading.ceiling},
    )


def irreversible_support(trace, positivity_tol):
    """Running union of ``{u > positivity_tol}`` joined with A0, one mask per state."""
    if not len(trace.states):
        raise ValueError("empty trace")
    if positivity_tol < 0:
        raise ValueError("positivity_tol must be nonnegative")
    acc = trace.mesh.a0_nodes.copy()
    out = []
    for s in trace.states:
        acc = acc | (np.asarray(s.u) > positivity_tol)
        out.append(acc.copy())
    return out


def brittle_competitors(mesh, form, state, layers=(1, 2, 4)):
    """Sets ``B >= A`` for the sampled stability audit: single frontier nodes,
    frontier rings, and metric dilations."""
    A = state.A
    out = []
    fr = np.flatnonzero(frontier(form, A) & ~mesh.clamp_nodes)
    pick = fr if fr.size <= 8 else fr[np.linspace(0, fr.size - 1, 8).round().astype(int)]
    for i in pick:
        B = A.copy()
        B[i] = True
        out.append((f"node {int(i)}", B))
    ring = A.copy()
    for k in range(1, max(layers) + 1):
        ring = ring | (frontier(form, ring) & ~mesh.clamp_nodes)
        if k in layers:
            out.append((f"ring {k}", ring.copy()))
    for r in (0.05, 0.1, 0.25):
        out.append((f"dilate {r}", dilate(mesh, A, r) & ~mesh.clamp_nodes))
    out.append(("all", ~mesh.clamp_nodes))
    return out


def shape_stability_audit(mesh, form, kappa, state, loading, competitor_sets=None, tol=1e-9, rtol=1e-10):
    """Sampled check of ``E(t, A) <= E(t, B) + toughness(B \\ A)`` for ``B >= A``."""
    trace = loading.amplitude(state.t) * loading.profile
    EA = dirichlet_energy(form, state.u)
    sets = brittle_competitors(mesh, form, state) if competitor_sets is None else competitor_sets
    report = AuditReport(f"shape stability t={state.t:.6g}")
    thr = tol * (1.0 + abs(EA))
    for name, B in sets:
        B = np.asarray(B, dtype=bool) | state.A
        EB, _ = shape_energy(mesh, form, B, trace, rtol)
        report.add(name, EA - EB - toughness_cost(mesh, kappa, B & ~state.A), thr)
    return report


def reformulation_check(mesh, form, kappa, state, competitor_set, trace_values=None, tol_gap=1e-9, tol_h1=1e-9, tol_res=1e-8):
    """Displacement-form checks of a brittle state.

    Reports, per competitor ``v`` (same Gamma trace), the gap
    ``0.5|grad u|^2 - 0.5|grad v|^2 - toughness({v > 0} \\ A)``; the H1
    distance between ``u`` and the harmonic extension recomputed on ``A``;
    and the largest discrete-Laplacian residual on free nodes of ``{u > 0}``.
    """
    kappa = np.asarray(kappa, dtype=float)
    u = np.asarray(state.u, dtype=float)
    A = np.asarray(state.A, dtype=bool)
    trace = u if trace_values is None else trace_values
    Eu = dirichlet_energy(form, u)
    report = AuditReport(f"displacement reformulation t={state.t:.6g}")
    for name, v in competitor_set:
        v = np.asarray(v, dtype=float)
        if not np.allclose(v[mesh.gamma_nodes], u[mesh.gamma_nodes], rtol=0, atol=1e-14):
            raise ValueError(f"competitor {name!r} does not match the Gamma trace")
        new = (v > 0) & ~A
        report.add(f"gap {name}", Eu - dirichlet_energy(form, v) - toughness_cost(mesh, kappa, new), tol_gap * (1.0 + abs(Eu)))
    h = harmonic_extension(mesh, form, A | mesh.a0_nodes, trace)
    report.add("h1 distance to harmonic extension", field_distances(mesh, form, u, h)[1], tol_h1)
    live = A & ~mesh.fixed_nodes & (u > 0)
    res = np.abs((form.K @ u)[live])
    report.add("harmonic residual on {u>0}", float(res.max()) if res.size else 0.0, tol_res)
    return report


def displacement_competitors(mesh, form, state, trace_values, radii=(0.02, 0.05, 0.1, 0.25)):
    """Harmonic extensions on dilated fronts, sharing the Gamma trace of the state."""
    out = [("self", np.asarray(state.u, dtype=float).copy())]
    for r in radii:
        B = (dilate(mesh, state.A, r) & ~mesh.clamp_nodes) | state.A
        out.append((f"dilated {r}", harmonic_extension(mesh, form, B, trace_values)))
    return out
