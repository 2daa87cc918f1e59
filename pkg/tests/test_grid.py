import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from debond.errors import ConfigurationError
from debond.grid import (
    assemble_dirichlet_form,
    build_mesh,
    dilate,
    dirichlet_energy,
    field_distances,
    frontier,
    gamma_trace,
    harmonic_extension,
    set_integral,
)

from conftest import line_mesh


def test_coarse_1d_markings():
    mesh = build_mesh(1, [1.0], [5], "left", [(0.0, 0.2)])
    np.testing.assert_allclose(mesh.coords[:, 0], [0, 0.25, 0.5, 0.75, 1.0])
    assert mesh.gamma_nodes.tolist() == [True, False, False, False, False]
    assert mesh.a0_nodes.tolist() == [True, False, False, False, False]


def test_weights_sum_1d():
    mesh = build_mesh(1, [1.0], [401], "left", [(0.0, 0.2)])
    assert mesh.n_nodes == 401
    assert abs(mesh.weights.sum() - 1.0) < 1e-12


def test_weights_sum_2d_independent_loop():
    mesh = build_mesh(2, [1.0, 0.5], [49, 25], "left", [(0.0, 0.2), (0.0, 0.5)])
    assert mesh.n_nodes == 1225
    hx, hy = 1.0 / 48, 0.5 / 24
    total = 0.0
    for i in range(49):
        for j in range(25):
            total += hx * (0.5 if i in (0, 48) else 1.0) * hy * (0.5 if j in (0, 24) else 1.0)
    assert abs(total - 0.5) < 1e-12
    assert abs(mesh.weights.sum() - 0.5) < 1e-12


def test_a0_must_cover_gamma():
    with pytest.raises(ConfigurationError):
        build_mesh(1, [1.0], [11], "left", [(0.5, 0.8)])


def test_clamp_cannot_touch_a0():
    with pytest.raises(ConfigurationError):
        build_mesh(1, [1.0], [11], "left", [(0.0, 1.0)], ["right"])


def test_clamp_nodes_are_fixed():
    mesh = build_mesh(1, [1.0], [11], "left", [(0.0, 0.2)], ["right"])
    assert mesh.clamp_nodes.tolist() == [False] * 10 + [True]
    assert mesh.fixed_nodes[[0, 10]].all() and mesh.fixed_nodes.sum() == 2


def test_stiffness_two_elements():
    mesh, form = line_mesh(3, 0.5)
    np.testing.assert_allclose(form.K.toarray(), [[2, -2, 0], [-2, 4, -2], [0, -2, 2]])


def test_constants_in_kernel():
    mesh = build_mesh(2, [1.0, 0.5], [9, 5], "left", [(0.0, 0.3), (0.0, 0.5)])
    form = assemble_dirichlet_form(mesh)
    assert abs(dirichlet_energy(form, np.full(mesh.n_nodes, 3.7))) < 1e-12


def test_energy_of_unit_ramp():
    mesh, form = line_mesh(101)
    assert dirichlet_energy(form, mesh.coords[:, 0]) == pytest.approx(0.5, abs=1e-12)


def test_energy_half_ramp_and_scaling():
    mesh, form = line_mesh(101)
    x = mesh.coords[:, 0]
    v = np.clip(1.0 - x / 0.5, 0.0, None)
    assert dirichlet_energy(form, np.zeros_like(x)) == 0.0
    assert dirichlet_energy(form, v) == pytest.approx(1.0, abs=1e-12)
    assert dirichlet_energy(form, 3 * v) == pytest.approx(9 * dirichlet_energy(form, v), rel=1e-14)


def test_energy_2d_bilinear_ramp():
    mesh = build_mesh(2, [1.0, 0.5], [21, 11], "left", [(0.0, 0.3), (0.0, 0.5)])
    form = assemble_dirichlet_form(mesh)
    # 0.5 * integral of |grad x|^2 over the box = 0.25
    assert dirichlet_energy(form, mesh.coords[:, 0]) == pytest.approx(0.25, abs=1e-12)


def test_harmonic_all_nodes_free_end():
    mesh, form = line_mesh(41, 1.0)
    h = harmonic_extension(mesh, form, np.ones(mesh.n_nodes, bool), 0.7)
    np.testing.assert_allclose(h, 0.7, atol=1e-10)
    assert abs(dirichlet_energy(form, h)) < 1e-12


def test_harmonic_half_interval():
    mesh, form = line_mesh(101)
    x = mesh.coords[:, 0]
    h = harmonic_extension(mesh, form, x < 0.5, 1.0)
    np.testing.assert_allclose(h, np.clip(1 - 2 * x, 0, None), atol=1e-9)
    assert dirichlet_energy(form, h) == pytest.approx(1.0, abs=1e-8)


def test_harmonic_zero_data():
    mesh, form = line_mesh(21)
    assert not harmonic_extension(mesh, form, np.ones(21, bool), 0.0).any()


def test_half_ramp_refinement():
    errs = []
    for n in (11, 21, 41, 81):
        mesh, form = line_mesh(n)
        x = mesh.coords[:, 0]
        h = harmonic_extension(mesh, form, x < 0.5 - 1e-12, 1.0)
        errs.append(abs(dirichlet_energy(form, h) - 1.0))
    # interval end falls between nodes on odd refinements; error must be O(dx)
    for e, n in zip(errs, (11, 21, 41, 81)):
        assert e <= 2.0 / (n - 1) + 1e-9


def test_gamma_trace():
    mesh = build_mesh(2, [1.0, 0.5], [5, 3], "left", [(0.0, 0.3), (0.0, 0.5)])
    tr = gamma_trace(mesh, 2.0)
    assert np.all(tr[mesh.gamma_nodes] == 2.0) and not tr[~mesh.gamma_nodes].any()


def test_set_integral():
    mesh, _ = line_mesh(1001)
    x = mesh.coords[:, 0]
    assert set_integral(mesh, np.zeros(1001, bool), np.ones(1001)) == 0.0
    assert set_integral(mesh, (x > 0.2) & (x < 0.7), np.ones(1001)) == pytest.approx(0.5, abs=1e-3 + 1e-12)


def test_field_distances():
    mesh, form = line_mesh(201)
    x = mesh.coords[:, 0]
    assert field_distances(mesh, form, x, x) == (0.0, 0.0, 0.0)
    l2, h1, sup = field_distances(mesh, form, x + 0.3, x)
    assert l2 == pytest.approx(0.3, abs=1e-12) and sup == pytest.approx(0.3, abs=1e-12)
    assert h1 == pytest.approx(0.3, abs=1e-12)
    _, h1, _ = field_distances(mesh, form, x, np.zeros_like(x))
    assert h1**2 == pytest.approx(1.0 / 3.0 + 1.0, abs=1e-4)


def test_dilate_and_frontier():
    mesh, form = line_mesh(11)
    s = np.zeros(11, bool)
    s[:3] = True
    assert dilate(mesh, s, 0.1).tolist() == [True] * 4 + [False] * 7
    assert np.flatnonzero(frontier(form, s)).tolist() == [3]


# -- properties -------------------------------------------------------------

_sizes = st.integers(min_value=5, max_value=31)


@given(_sizes, st.floats(0.0, 5.0), st.data())
def test_maximum_principle(n, M, data):
    mesh, form = line_mesh(n)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=n, max_size=n)))
    mask |= mesh.a0_nodes
    h = harmonic_extension(mesh, form, mask, M)
    assert h.min() >= -1e-10 and h.max() <= M + 1e-10
    assert not h[~mask].any()


@given(st.integers(5, 25), st.integers(3, 12), st.data())
def test_harmonic_energy_optimal_2d(nx, ny, data):
    mesh = build_mesh(2, [1.0, 0.5], [nx, ny], "left", [(0.0, 0.3), (0.0, 0.5)])
    form = assemble_dirichlet_form(mesh)
    A = mesh.a0_nodes | np.array(data.draw(st.lists(st.booleans(), min_size=mesh.n_nodes, max_size=mesh.n_nodes)))
    h = harmonic_extension(mesh, form, A, 1.0)
    E = dirichlet_energy(form, h)
    rng = np.random.default_rng(data.draw(st.integers(0, 2**31)))
    free = A & ~mesh.gamma_nodes
    for _ in range(20):
        d = rng.normal(size=mesh.n_nodes) * free
        assert dirichlet_energy(form, h + 0.1 * d) >= E - 1e-9


@given(st.integers(5, 40), st.data())
def test_shape_energy_monotone_in_set(n, data):
    mesh, form = line_mesh(n)
    bits = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    extra = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    A = mesh.a0_nodes | np.array(bits)
    B = A | np.array(extra)
    EA = dirichlet_energy(form, harmonic_extension(mesh, form, A, 1.0))
    EB = dirichlet_energy(form, harmonic_extension(mesh, form, B, 1.0))
    assert EA >= EB - 1e-9


@given(_sizes, st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_energy_nonnegative_and_quadratic(n, coef):
    mesh, form = line_mesh(n)
    x = mesh.coords[:, 0]
    v = coef[0] + coef[1] * np.sin(3 * x)
    E = dirichlet_energy(form, v)
    assert E >= -1e-12
    assert dirichlet_energy(form, -2 * v) == pytest.approx(4 * E, rel=1e-9, abs=1e-12)
