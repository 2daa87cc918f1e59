import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from debond.brittle import (
    brittle_step_1d,
    brittle_step_discrete,
    displacement_competitors,
    dissipation,
    evolve_brittle,
    irreversible_support,
    reformulation_check,
    shape_energy,
    shape_stability_audit,
)
from debond.density import make_loading, toughness_field
from debond.errors import ConfigurationError
from debond.grid import assemble_dirichlet_form, build_mesh, dilate, harmonic_extension
from debond.trace import BrittleState, TimeGrid

from conftest import desk, line_mesh

SQRT_HALF = 0.7071067811865476
T_ONSET = 0.28284271247461906  # 0.2 * sqrt(2)
WORK_T = 1.2142135623730951  # t*^2 / (2 * 0.2) + sqrt(2) (1 - t*)


@pytest.fixture(scope="module")
def desk_trace():
    d = desk(401)
    return d, evolve_brittle(d.mesh, d.form, d.kappa, d.loading, d.grid(200))


def test_shape_energy_examples():
    mesh, form = line_mesh(101, 1.0)
    E, h = shape_energy(mesh, form, np.ones(101, bool), 0.6)
    assert abs(E) < 1e-14
    np.testing.assert_allclose(h, 0.6, atol=1e-10)
    mesh, form = line_mesh(101)
    E, _ = shape_energy(mesh, form, mesh.coords[:, 0] < 0.5, 1.0)
    assert E == pytest.approx(1.0, abs=1e-8)


def test_step_1d_examples():
    assert brittle_step_1d(0.2, 1.0, 1.0) == pytest.approx(SQRT_HALF, abs=1e-15)
    assert brittle_step_1d(0.5, 0.1, 1.0) == 0.5
    assert brittle_step_1d(0.37, 0.0, 2.0) == 0.37
    with pytest.raises(ValueError):
        brittle_step_1d(0.0, 1.0, 1.0)


@given(st.floats(0.01, 1.0), st.floats(0.0, 3.0), st.floats(0.1, 4.0))
def test_step_1d_minimises_interval_energy(lp, w, k):
    l = brittle_step_1d(lp, w, k)
    f = lambda x: w * w / (2 * x) + k * (x - lp)
    grid = np.linspace(lp, 5.0, 2001)
    assert f(l) <= f(grid).min() + 1e-9


def test_exact_1d_matches_front_law(desk401):
    d = desk401
    g = d.loading.profile
    h = d.mesh.cell_size
    for lam in (0.3, 0.6, 1.0):
        A = brittle_step_discrete(d.mesh, d.form, d.kappa, d.mesh.a0_nodes, lam * g, "exact-1d")
        front = d.mesh.coords[A, 0].max() + h
        assert abs(front - max(0.2, lam * SQRT_HALF)) <= h + 1e-12


def test_zero_trace_keeps_set():
    d = desk(101)
    A = d.mesh.a0_nodes | (d.mesh.coords[:, 0] < 0.4)
    for s in ("exact-1d",):
        np.testing.assert_array_equal(brittle_step_discrete(d.mesh, d.form, d.kappa, A, 0.0 * d.loading.profile, s), A)
    mesh = build_mesh(2, [1.0, 0.5], [11, 6], "left", [(0.0, 0.2), (0.0, 0.5)])
    form = assemble_dirichlet_form(mesh)
    kap = toughness_field(mesh, 1.0)
    A2 = brittle_step_discrete(mesh, form, kap, mesh.a0_nodes, np.zeros(mesh.n_nodes), "greedy-2d")
    np.testing.assert_array_equal(A2, mesh.a0_nodes)


def test_strategy_dimension_mismatch():
    d = desk(21)
    with pytest.raises(ConfigurationError):
        brittle_step_discrete(d.mesh, d.form, d.kappa, d.mesh.a0_nodes, d.loading.profile, "greedy-2d")


def test_desk_front_law_and_onset(desk_trace):
    d, tr = desk_trace
    t = tr.times
    law = np.maximum(0.2, t * SQRT_HALF)
    assert np.max(np.abs(np.asarray(tr.front) - law)) <= 0.0025 + 1e-12
    onset = t[np.argmax(np.asarray(tr.front) > 0.2 + 1e-12)]
    assert abs(onset - T_ONSET) <= 1.0 / 200 + 1e-12


def test_desk_energy_balance(desk_trace):
    d, tr = desk_trace
    led = tr.ledger
    assert led.elastic[-1] == pytest.approx(SQRT_HALF, rel=0.02)
    assert led.potential[-1] == pytest.approx(SQRT_HALF - 0.2, rel=0.02)
    assert led.work[-1] == pytest.approx(WORK_T, rel=0.02)
    assert led.max_abs_residual <= 0.03


def test_zero_loading_trace():
    d = desk(101)
    ld = make_loading(d.mesh, [0.0, 1.0], [0.0, 0.0], 0.1)
    tr = evolve_brittle(d.mesh, d.form, d.kappa, ld, TimeGrid.uniform(1.0, 10))
    assert all(np.array_equal(s.A, d.mesh.a0_nodes) for s in tr.states)
    assert not any(tr.ledger.elastic) and not any(tr.ledger.potential) and not any(tr.ledger.work)


def test_irreversible_support(desk_trace):
    d, tr = desk_trace
    sup = irreversible_support(tr, 1e-9)
    for a, b in zip(sup, sup[1:]):
        assert np.all(b[a])
    for s, Au in zip(tr.states, sup):
        assert not np.any(Au & ~dilate(d.mesh, s.A, d.mesh.cell_size))
    ld = make_loading(d.mesh, [0.0, 1.0], [0.0, 0.0], 0.1)
    zero = evolve_brittle(d.mesh, d.form, d.kappa, ld, TimeGrid.uniform(1.0, 3))
    assert all(np.array_equal(m, d.mesh.a0_nodes) for m in irreversible_support(zero, 0.0))


def test_audits_pass_on_evolution(desk_trace):
    d, tr = desk_trace
    for k in (40, 120, 200):
        s = tr.states[k]
        assert shape_stability_audit(d.mesh, d.form, d.kappa, s, d.loading).passed
        trace = d.loading.amplitude(s.t) * d.loading.profile
        rep = reformulation_check(d.mesh, d.form, d.kappa, s, displacement_competitors(d.mesh, d.form, s, trace), trace)
        assert rep.passed, rep.failures()
        assert rep["gap self"].value == 0.0


def test_shrunk_set_fails_reformulation(desk_trace):
    d, tr = desk_trace
    s = tr.states[-1]
    shrunk = d.mesh.a0_nodes | (d.mesh.coords[:, 0] < 0.4)
    bad = BrittleState(s.t, shrunk, s.u)
    rep = reformulation_check(d.mesh, d.form, d.kappa, bad, [("self", s.u)], d.loading.amplitude(s.t) * d.loading.profile)
    assert not rep["h1 distance to harmonic extension"].passed


def test_free_end_jumps_to_full_debonding():
    d = desk(401, clamp=())
    tr = evolve_brittle(d.mesh, d.form, d.kappa, d.loading, d.grid(200))
    t = tr.times
    front = np.asarray(tr.front)
    assert np.all(front[t <= 0.70] < 0.6)
    assert front[-1] == pytest.approx(1.0)
    assert tr.ledger.elastic[-1] == pytest.approx(0.0, abs=1e-12)


def test_greedy_2d_irreversible_and_stable():
    mesh = build_mesh(2, [1.0, 0.5], [21, 11], "left", [(0.0, 0.2), (0.0, 0.5)], ["right"])
    form = assemble_dirichlet_form(mesh)
    kap = toughness_field(mesh, 1.0)
    ld = make_loading(mesh, [0.0, 1.0], [0.0, 1.0], 0.1)
    tr = evolve_brittle(mesh, form, kap, ld, TimeGrid.uniform(1.0, 8))
    assert tr.meta["strategy"] == "greedy-2d"
    for a, b in zip(tr.states, tr.states[1:]):
        assert np.all(b.A[a.A])
    assert not np.any(tr.states[-1].A & mesh.clamp_nodes)
    assert shape_stability_audit(mesh, form, kap, tr.states[-1], ld).passed


def test_dissipation_counts_new_nodes_only():
    d = desk(101)
    A = d.mesh.a0_nodes | (d.mesh.coords[:, 0] < 0.5)
    assert dissipation(d.mesh, d.kappa, d.mesh.a0_nodes) == 0.0
    assert dissipation(d.mesh, d.kappa, A) == pytest.approx(0.3, abs=0.011)


@given(st.integers(11, 61), st.lists(st.floats(0.0, 2.0), min_size=1, max_size=4))
def test_irreversibility_random_programs(n, tail):
    mesh, form = line_mesh(n, 0.25, ["right"])
    kap = toughness_field(mesh, 1.0)
    ld = make_loading(mesh, np.linspace(0, 1, len(tail) + 1), [0.0] + tail, 0.2)
    tr = evolve_brittle(mesh, form, kap, ld, TimeGrid.uniform(1.0, 8))
    for a, b in zip(tr.states, tr.states[1:]):
        assert np.all(b.A[a.A])
    for s in tr.states:
        # maximum principle: the debonded component touching Gamma carries a positive field
        lam = ld.amplitude(s.t)
        if lam > 1e-8:
            comp = s.A & ~mesh.fixed_nodes
            first_gap = np.argmax(~s.A) if (~s.A).any() else n
            live = comp & (np.arange(n) < first_gap)
            assert np.all(s.u[live] > 0)
