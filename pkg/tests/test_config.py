import pytest

from debond.config import RunConfig, build_problem, parse_config
from debond.errors import ConfigurationError
from debond.settings import SolverSettings

DESK = """
[geometry]
dimension = 1
lengths = [1.0]
nodes = [401]
gamma = "left"
a0 = [[0.0, 0.2]]
clamp = ["right"]

[loading]
times = [0.0, 1.0]
values = [0.0, 1.0]
"""


def test_minimal_desk_config():
    cfg = parse_config(DESK)
    assert cfg.time.steps == 200 and cfg.seed == 0
    assert cfg.solver == SolverSettings()
    assert cfg.study.eps == (0.1, 0.05, 0.025, 0.0125)
    p = build_problem(cfg)
    assert p.mesh.n_nodes == 401 and len(p.time_grid) == 201


def test_empty_config_is_default():
    assert parse_config("") == RunConfig()


def test_positive_initial_load_rejected():
    with pytest.raises(ConfigurationError) as err:
        parse_config(DESK.replace("values = [0.0, 1.0]", "values = [0.3, 1.0]"))
    assert "w(0) = 0 on Gamma" in str(err.value)


def test_negative_eps_rejected_with_rule():
    with pytest.raises(ConfigurationError) as err:
        parse_config(DESK + "\n[study]\neps = [0.1, -0.05]\n")
    assert any("schedule rule" in p for p in err.value.problems)


def test_all_problems_listed():
    text = DESK.replace("values = [0.0, 1.0]", "values = [0.3, 1.0]") + """
[study]
eps = [0.05, 0.1]
[solver]
step_ftol = -1.0
brittle_strategy = "greedy-2d"
[nonsense]
a = 1
"""
    with pytest.raises(ConfigurationError) as err:
        parse_config(text)
    probs = err.value.problems
    assert len(probs) >= 5
    assert any("unknown section" in p for p in probs)
    assert any("does not match dimension" in p for p in probs)


def test_parse_error_has_line_number():
    with pytest.raises(ConfigurationError) as err:
        parse_config("[geometry]\nnodes = [5,\n\n[time\n")
    assert err.value.lineno is not None


def test_a0_not_covering_gamma():
    with pytest.raises(ConfigurationError) as err:
        parse_config(DESK.replace("a0 = [[0.0, 0.2]]", "a0 = [[0.3, 0.5]]"))
    assert any("neighbourhood of Gamma" in p for p in err.value.problems)


def test_every_tolerance_overridable():
    overrides = {
        "harmonic_rtol": 1e-9, "step_ftol": 1e-11, "step_max_sweeps": 20, "positivity_tol": 1e-8,
        "audit_tol": 1e-8, "greedy_layers": 2, "front_restarts": 1, "delta_exponent": 0.4,
        "harmonic_iter_factor": 5, "seed": 11,
    }
    body = "\n".join(f"{k} = {v!r}" for k, v in overrides.items())
    cfg = parse_config(DESK + "\n[solver]\n" + body + "\n")
    for k, v in overrides.items():
        assert getattr(cfg.solver, k) == v


def test_unknown_key_reported():
    with pytest.raises(ConfigurationError) as err:
        parse_config(DESK + "\n[time]\nstepz = 3\n")
    assert "unknown key time.stepz" in err.value.problems
