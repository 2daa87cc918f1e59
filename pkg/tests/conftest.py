import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from debond.density import PsiFamily, make_loading, toughness_field
from debond.grid import assemble_dirichlet_form, build_mesh
from debond.trace import TimeGrid

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


class Desk:
    """1D desk scenario: (0, 1), Gamma at 0, A0 = (0, 0.2), far end clamped."""

    def __init__(self, nodes=401, clamp=("right",)):
        self.mesh = build_mesh(1, [1.0], [nodes], "left", [(0.0, 0.2)], list(clamp) if clamp else None)
        self.form = assemble_dirichlet_form(self.mesh)
        self.density = PsiFamily.from_mesh(self.mesh, 1.0, 1.0)
        self.kappa = toughness_field(self.mesh, 1.0)
        self.loading = make_loading(self.mesh, [0.0, 1.0], [0.0, 1.0], 0.1)

    def grid(self, steps):
        return TimeGrid.uniform(1.0, steps)


@functools.lru_cache(maxsize=None)
def desk(nodes=401, clamp=("right",)):
    return Desk(nodes, clamp)


@pytest.fixture(scope="session")
def desk401():
    return desk(401)


@pytest.fixture(scope="session")
def desk_coarse():
    return desk(101)


def line_mesh(n, a0_hi=0.2, clamp=None):
    mesh = build_mesh(1, [1.0], [n], "left", [(0.0, a0_hi)], clamp)
    return mesh, assemble_dirichlet_form(mesh)


def ramp(x, hi):
    return np.clip(1.0 - x / hi, 0.0, 1.0)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("measured", "")
        _ACCEPTANCE[report.nodeid.split("::")[-1]] = (report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda s: int(s.split("_")[2])):
        outcome, detail = _ACCEPTANCE[name]
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}  {detail}")
