import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from debond.brittle import evolve_brittle
from debond.errors import ConfigurationError, RefusalError
from debond.limit import (
    EpsComparison,
    EpsSchedule,
    StudySetup,
    compare_traces,
    convergence_study,
    eps_debonded_set,
    rate_table,
    well_prepared_value,
)

from conftest import desk


def _entry(eps, h1, sd, gap):
    return EpsComparison(eps, eps**-0.5, h1, sd, gap, 0.0, 0, 0)


def test_schedule_rules():
    s = EpsSchedule((0.1, 0.05, 0.025))
    assert all(b > a for a, b in zip(s.deltas, s.deltas[1:]))
    assert all(b < a for a, b in zip(s.thresholds, s.thresholds[1:]))
    for bad in ((0.1, -0.05), (0.05, 0.1), (0.1, 0.1)):
        with pytest.raises(ConfigurationError):
            EpsSchedule(bad)
    with pytest.raises(ConfigurationError):
        EpsSchedule((0.1, 0.05), 1.0)


def test_threshold_shrinks_by_sqrt2():
    s = EpsSchedule((0.1, 0.05))
    assert s.thresholds[0] / s.thresholds[1] == pytest.approx(math.sqrt(2), rel=1e-14)


def test_eps_debonded_set():
    d = desk(11)
    assert np.array_equal(eps_debonded_set(d.mesh, np.zeros(11), 0.1, 3.0), d.mesh.a0_nodes)
    gam = np.zeros(11)
    gam[[4, 5, 6]] = (0.0, 0.05, 0.5)
    A = eps_debonded_set(d.mesh, gam, 0.01, 0.01**-0.5)
    assert A[[4, 5, 6]].tolist() == [False, False, True]
    assert np.array_equal(A & ~d.mesh.a0_nodes, np.isin(np.arange(11), [6]))


@given(st.lists(st.floats(0.0, 2.0), min_size=11, max_size=11), st.floats(0.01, 0.5))
def test_eps_set_grows_as_eps_halves(gam, eps):
    d = desk(11)
    gam = np.array(gam)
    s = EpsSchedule((eps, eps / 2))
    A1 = eps_debonded_set(d.mesh, gam, eps, s.delta(eps))
    A2 = eps_debonded_set(d.mesh, gam, eps / 2, s.delta(eps / 2))
    assert np.all(A2[A1])


def test_well_prepared_values():
    d = desk(401)
    z = np.zeros(401)
    assert well_prepared_value(d.mesh, d.density, 0.1, z, z) == 0.0
    inside = 0.1 * d.loading.profile
    assert well_prepared_value(d.mesh, d.density, 0.1, inside, inside) == 0.0
    c = np.where(d.mesh.a0_nodes, 0.0, 0.3)
    vals = [well_prepared_value(d.mesh, d.density, e, c, c) for e in (0.1, 0.01, 0.001)]
    assert vals[-1] == pytest.approx(float(d.mesh.weights[~d.mesh.a0_nodes].sum()), rel=1e-9)
    assert vals[0] < vals[1] < vals[2] + 1e-15


def test_rate_table_exact_halving():
    rows = rate_table([_entry(0.1, 0.4, 0.4, 0.4), _entry(0.05, 0.2, 0.2, 0.2), _entry(0.025, 0.1, 0.1, 0.1)])
    assert rows[0][4:] == ("NA", "NA", "NA")
    for r in rows[1:]:
        for o in r[4:]:
            assert o == pytest.approx(1.0, abs=1e-14)


def test_rate_table_guards():
    with pytest.raises(RefusalError):
        rate_table([_entry(0.1, 1, 1, 1)])
    rows = rate_table([_entry(0.1, 0.0, 0.2, 0.1), _entry(0.05, 0.0, 0.1, 0.0)])
    assert rows[1][4] == "NA" and rows[1][6] == "NA"
    assert rows[1][5] == pytest.approx(1.0)


def test_empty_schedule_gives_empty_report():
    d = desk(51)
    grid = d.grid(5)
    setup = StudySetup(d.mesh, d.form, d.density, d.kappa, d.loading, grid, EpsSchedule(()))
    report, brittle, traces = convergence_study(setup)
    assert report.entries == [] and traces == []
    assert report.brittle_h1_sup > 0


@pytest.fixture(scope="module")
def small_study():
    d = desk(101)
    grid = d.grid(40)
    setup = StudySetup(d.mesh, d.form, d.density, d.kappa, d.loading, grid, EpsSchedule((0.1, 0.05)), sensitivity_exponents=(0.25,), threads=2)
    return d, grid, setup, convergence_study(setup)


def test_study_structure(small_study):
    d, grid, setup, (report, brittle, traces) = small_study
    assert len(report.entries) == 2 and set(report.sensitivity) == {0.25}
    for e in report.entries:
        assert e.monotonicity_violations == 0 and e.inclusion_violations == 0
        assert e.well_prepared == 0.0
    assert report.brittle_inclusion_violations == 0
    assert isinstance(report.as_dict()["entries"][0]["h1"], float)


def test_study_thread_independent(small_study):
    d, grid, setup, (report, brittle, traces) = small_study
    serial = StudySetup(**{**setup.__dict__, "threads": 1})
    again, _, _ = convergence_study(serial, brittle=brittle)
    assert again.as_dict() == report.as_dict()


def test_compare_rejects_mismatched_grids(small_study):
    d, grid, setup, (report, brittle, traces) = small_study
    other = evolve_brittle(d.mesh, d.form, d.kappa, d.loading, d.grid(20))
    with pytest.raises(ConfigurationError):
        compare_traces(d.form, d.density, d.kappa, other, traces[0], 0.1, 0.1**-0.5)


def test_compare_self_distances(small_study):
    d, grid, setup, (report, brittle, traces) = small_study
    c = compare_traces(d.form, d.density, d.kappa, brittle, traces[1], 0.05, 0.05**-0.5)
    assert c.h1 == report.entries[1].h1
    assert len(c.per_time["h1"]) == len(grid)
