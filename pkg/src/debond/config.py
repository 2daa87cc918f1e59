"""TOML run configuration: parsing, validation and model construction."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .density import PsiFamily, make_loading, toughness_field
from .errors import ConfigurationError
from .grid import assemble_dirichlet_form, build_mesh
from .limit import EpsSchedule
from .settings import RESTART_KINDS, SolverSettings
from .trace import TimeGrid


@dataclass(frozen=True)
class GeometryConfig:
    dimension: int = 1
    lengths: tuple = (1.0,)
    nodes: tuple = (401,)
    gamma: object = "left"
    a0: object = ((0.0, 0.2),)
    clamp: tuple = ()


@dataclass(frozen=True)
class DensityConfig:
    family: str = "exponential"
    kappa_inf: float = 1.0
    rate: float = 1.0
    toughness: float | None = None  # brittle kappa; defaults to kappa_inf


@dataclass(frozen=True)
class LoadingConfig:
    times: tuple = (0.0, 1.0)
    values: tuple = (0.0, 1.0)
    ramp_width: float = 0.1


@dataclass(frozen=True)
class TimeConfig:
    steps: int | None = 200
    partition: tuple | None = None


@dataclass(frozen=True)
class StudyConfig:
    eps: tuple = (0.1, 0.05, 0.025, 0.0125)
    delta_exponent: float = 0.5
    sensitivity: tuple = (0.25, 0.75)
    run_eps: float = 0.05
    threads: int = 1


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    snapshot_times: tuple = ()
    plots: bool = True


@dataclass(frozen=True)
class OracleConfig:
    instances: int = 20
    levels: int = 51
    eps: tuple = (0.5, 0.1)
    nodes: tuple = (4, 5, 6, 7)


@dataclass(frozen=True)
class AuditConfig:
    checkpoints: int = 10


@dataclass(frozen=True)
class RunConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    loading: LoadingConfig = field(default_factory=LoadingConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    study: StudyConfig = field(default_factory=StudyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    audit: AuditConfig = field(default_factory=AuditConfig)

    @property
    def seed(self):
        return self.solver.seed

    def replace(self, **blocks):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(blocks)
        return RunConfig(**data)

    def as_dict(self):
        out = {}
        for f in fields(self):
            block = getattr(self, f.name)
            out[f.name] = block.as_dict() if hasattr(block, "as_dict") else _plain(asdict(block))
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_BLOCKS = {
    "geometry": GeometryConfig,
    "density": DensityConfig,
    "loading": LoadingConfig,
    "time": TimeConfig,
    "solver": SolverSettings,
    "study": StudyConfig,
    "output": OutputConfig,
    "oracle": OracleConfig,
    "audit": AuditConfig,
}

_TUPLE_KEYS = {
    "lengths", "nodes", "clamp", "times", "values", "partition", "eps", "sensitivity",
    "snapshot_times", "restarts",
}


def _freeze(value):
    if isinstance(value, list):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, dict):
        return {k: _freeze(v) for k, v in value.items()}
    return value


def _decode_lineno(err):
    lineno = getattr(err, "lineno", None)
    if lineno is None:
        m = re.search(r"line (\d+)", str(err))
        lineno = int(m.group(1)) if m else None
    return lineno


def parse_config(text) -> RunConfig:
    """Parse and validate configuration text.

    Every violated constraint is collected into one ``ConfigurationError``
    (its ``problems`` attribute lists them); TOML syntax errors carry the
    line number.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        lineno = _decode_lineno(err)
        raise ConfigurationError(f"parse error at line {lineno}: {err}", [str(err)], lineno=lineno) from None

    problems = []
    blocks = {}
    for name, value in raw.items():
        if name not in _BLOCKS:
            problems.append(f"unknown section [{name}]")
            continue
        if not isinstance(value, dict):
            problems.append(f"[{name}] must be a table")
            continue
        allowed = {f.name for f in fields(_BLOCKS[name])}
        kw = {}
        for key, v in value.items():
            if key not in allowed:
                problems.append(f"unknown key {name}.{key}")
                continue
            kw[key] = _freeze(v)
        if name == "time" and "partition" in kw and "steps" not in kw:
            kw["steps"] = None
        if name == "solver" and "restarts" in kw:
            bad = [r for r in kw["restarts"] if r not in RESTART_KINDS]
            if bad:
                problems.append(f"solver.restarts: unknown kinds {bad}; allowed {list(RESTART_KINDS)}")
        try:
            blocks[name] = _BLOCKS[name](**kw)
        except (TypeError, ValueError) as err:
            problems.append(f"[{name}]: {err}")
    cfg = RunConfig(**blocks)
    problems.extend(validate(cfg))
    if problems:
        raise ConfigurationError("invalid configuration:\n  - " + "\n  - ".join(problems), problems)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate(cfg: RunConfig):
    """Return the list of violated constraints (empty if the config is usable)."""
    p = []
    g, d, ld, tm, st, s, o, orc = cfg.geometry, cfg.density, cfg.loading, cfg.time, cfg.study, cfg.solver, cfg.output, cfg.oracle

    if g.dimension not in (1, 2):
        p.append("geometry.dimension must be 1 or 2")
    try:
        build_mesh(g.dimension, g.lengths, g.nodes, g.gamma, g.a0, g.clamp or None)
    except ConfigurationError as err:
        p.append(f"geometry: {err} (A0 must contain a neighbourhood of Gamma)")
    except (TypeError, ValueError) as err:
        p.append(f"geometry: malformed geometry block ({err})")

    if d.family not in ("exponential", "psi-exp"):
        p.append(f"density.family {d.family!r} unsupported; only 'exponential' is implemented")
    for key in ("kappa_inf", "rate"):
        v = getattr(d, key)
        if not (_num(v) and v > 0):
            p.append(f"density.{key} must be positive")
    if d.toughness is not None and not (_num(d.toughness) and d.toughness > 0):
        p.append("density.toughness must be positive (toughness positive off A0)")

    times, values = ld.times, ld.values
    if len(times) < 2 or len(times) != len(values):
        p.append("loading.times and loading.values need equal length >= 2")
    else:
        if times[0] != 0 or any(b <= a for a, b in zip(times, times[1:])):
            p.append("loading.times must start at 0 and increase strictly")
        if any(v < 0 for v in values):
            p.append("loading.values must be nonnegative")
        if values[0] != 0:
            p.append(
                "loading: lambda(0) > 0 with the default initial state (0, 0) is rejected; "
                "that state is globally stable and well prepared only if w(0) = 0 on Gamma"
            )
    if not (_num(ld.ramp_width) and ld.ramp_width > 0):
        p.append("loading.ramp_width must be positive")

    if tm.partition is not None:
        part = tm.partition
        if len(part) < 2 or part[0] != 0 or any(b <= a for a, b in zip(part, part[1:])):
            p.append("time.partition must start at 0 and increase strictly")
        elif len(times) >= 2 and part[-1] > times[-1]:
            p.append("time.partition extends beyond the last loading breakpoint")
    elif not (isinstance(tm.steps, int) and tm.steps >= 1):
        p.append("time.steps must be a positive integer (or give time.partition)")

    if any(not (_num(e) and e > 0) for e in st.eps):
        p.append("study.eps: every eps must be positive (schedule rule: eps > 0, strictly decreasing, delta_eps -> inf, eps*delta_eps -> 0)")
    else:
        try:
            if st.eps:
                EpsSchedule(st.eps, st.delta_exponent)
        except ConfigurationError as err:
            p.append(f"study: {err}")
    for q in st.sensitivity:
        if not (_num(q) and 0 < q < 1):
            p.append("study.sensitivity exponents must lie in (0, 1)")
    if not (_num(st.run_eps) and st.run_eps > 0):
        p.append("study.run_eps must be positive")
    if not (isinstance(st.threads, int) and st.threads >= 1):
        p.append("study.threads must be a positive integer")

    for key in ("harmonic_rtol", "step_ftol", "positivity_tol", "audit_tol"):
        v = getattr(s, key)
        if not (_num(v) and v > 0):
            p.append(f"solver.{key} must be positive")
    for key in ("harmonic_iter_factor", "step_max_sweeps", "greedy_layers"):
        v = getattr(s, key)
        if not (isinstance(v, int) and v >= 1):
            p.append(f"solver.{key} must be a positive integer")
    if not (isinstance(s.front_restarts, int) and s.front_restarts >= 0):
        p.append("solver.front_restarts must be a nonnegative integer")
    if not (_num(s.delta_exponent) and 0 < s.delta_exponent < 1):
        p.append("solver.delta_exponent must lie in (0, 1)")
    if s.brittle_strategy not in ("auto", "exact-1d", "greedy-2d"):
        p.append("solver.brittle_strategy must be 'auto', 'exact-1d' or 'greedy-2d'")
    elif (s.brittle_strategy == "exact-1d" and g.dimension != 1) or (s.brittle_strategy == "greedy-2d" and g.dimension != 2):
        p.append(f"solver.brittle_strategy {s.brittle_strategy!r} does not match dimension {g.dimension}")
    if not isinstance(s.seed, int) or isinstance(s.seed, bool):
        p.append("solver.seed must be an integer")

    if not isinstance(o.plots, bool):
        p.append("output.plots must be true or false")
    if any(not _num(t) or t < 0 for t in o.snapshot_times):
        p.append("output.snapshot_times must be nonnegative numbers")

    if not (isinstance(orc.instances, int) and orc.instances >= 1):
        p.append("oracle.instances must be a positive integer")
    if not (isinstance(orc.levels, int) and 2 <= orc.levels <= 101):
        p.append("oracle.levels must be an integer in [2, 101]")
    if any(not (isinstance(n, int) and 3 <= n <= 7) for n in orc.nodes):
        p.append("oracle.nodes must be integers in [3, 7] (at most 6 free nodes)")
    if any(not (_num(e) and e > 0) for e in orc.eps):
        p.append("oracle.eps must be positive")
    if not (isinstance(cfg.audit.checkpoints, int) and cfg.audit.checkpoints >= 1):
        p.append("audit.checkpoints must be a positive integer")
    return p


@dataclass
class Problem:
    mesh: object
    form: object
    density: PsiFamily
    kappa: np.ndarray
    loading: object
    time_grid: TimeGrid


def build_problem(cfg: RunConfig) -> Problem:
    g, d, ld = cfg.geometry, cfg.density, cfg.loading
    mesh = build_mesh(g.dimension, g.lengths, g.nodes, g.gamma, g.a0, g.clamp or None)
    form = assemble_dirichlet_form(mesh)
    density = PsiFamily.from_mesh(mesh, kappa_inf=d.kappa_inf, rate=d.rate)
    kappa = toughness_field(mesh, d.kappa_inf if d.toughness is None else d.toughness)
    loading = make_loading(mesh, ld.times, ld.values, ld.ramp_width)
    if cfg.time.partition is not None:
        grid = TimeGrid(np.asarray(cfg.time.partition, dtype=float))
    else:
        grid = TimeGrid.uniform(loading.T, cfg.time.steps)
    return Problem(mesh, form, density, kappa, loading, grid)
