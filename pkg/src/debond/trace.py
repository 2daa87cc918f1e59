"""Time grids, evolution states and energy ledgers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True, eq=False)
class TimeGrid:
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ConfigurationError("a time grid needs at least two instants")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("time grid must start at 0 and increase strictly")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T, steps):
        t = np.linspace(0.0, float(T), int(steps) + 1)
        t[-1] = float(T)
        return cls(t)

    @property
    def T(self):
        return float(self.times[-1])

    @property
    def fineness(self):
        return float(np.max(np.diff(self.times)))

    def __len__(self):
        return self.times.size


@dataclass
class CohesiveState:
    t: float
    u: np.ndarray
    gamma: np.ndarray
    eps: float


@dataclass
class BrittleState:
    t: float
    A: np.ndarray
    u: np.ndarray


@dataclass
class EnergyLedger:
    """Per-step energy bookkeeping.

    ``potential`` is the cohesive potential (cohesive runs) or the dissipated
    toughness (brittle runs). ``residual`` is
    ``elastic + potential - (elastic_0 + potential_0) - work`` with left-endpoint
    work increments; the trapezoidal variant is kept for diagnostics.
    """

    times: list = field(default_factory=list)
    elastic: list = field(default_factory=list)
    potential: list = field(default_factory=list)
    work_increment: list = field(default_factory=list)
    work: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    work_trapezoid: list = field(default_factory=list)
    residual_trapezoid: list = field(default_factory=list)

    def append(self, t, elastic, potential, dw, dw_trap):
        self.times.append(float(t))
        self.elastic.append(float(elastic))
        self.potential.append(float(potential))
        self.work_increment.append(float(dw))
        prev = self.work[-1] if self.work else 0.0
        prev_trap = self.work_trapezoid[-1] if self.work_trapezoid else 0.0
        self.work.append(prev + float(dw))
        self.work_trapezoid.append(prev_trap + float(dw_trap))
        base = self.elastic[0] + self.potential[0]
        total = float(elastic) + float(potential)
        self.residual.append(total - base - self.work[-1])
        self.residual_trapezoid.append(total - base - self.work_trapezoid[-1])

    def __len__(self):
        return len(self.times)

    @property
    def max_abs_residual(self):
        return float(np.max(np.abs(self.residual))) if self.residual else 0.0


@dataclass
class EvolutionTrace:
    kind: str  # "cohesive" or "brittle"
    mesh: object
    states: list
    ledger: EnergyLedger
    front: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def __len__(self):
        return len(self.states)


def support_front(mesh, mask) -> float:
    """1D: position of the first node beyond the set (from Gamma).
    2D: measure of the set divided by the measure of the box."""
    mask = np.asarray(mask, dtype=bool)
    if mesh.dimension == 2:
        return float(mesh.weights[mask].sum() / mesh.measure)
    d = mesh.distance_to_gamma()
    if not mask.any():
        return 0.0
    return float(min(d[mask].max() + mesh.spacing[0], mesh.lengths[0]))
