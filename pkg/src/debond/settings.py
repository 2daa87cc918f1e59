"""Solver tolerances and toggles shared by the evolvers (all overridable from config)."""

from __future__ import annotations

from dataclasses import dataclass, fields

RESTART_KINDS = ("increment", "previous", "lift", "eps_set", "eps_dilated", "a0")


@dataclass(frozen=True)
class SolverSettings:
    harmonic_rtol: float = 1e-10
    harmonic_iter_factor: int = 10
    step_ftol: float = 1e-12
    step_max_sweeps: int = 500
    restarts: tuple = RESTART_KINDS
    front_restarts: int = 0  # extra candidates: extensions on evenly spaced fronts
    delta_exponent: float = 0.5
    positivity_tol: float = 1e-12  # relative to the loading ceiling M
    brittle_strategy: str = "auto"
    greedy_layers: int = 2
    audit_tol: float = 1e-9
    seed: int = 0

    def replace(self, **kw):
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(kw)
        return SolverSettings(**data)

    def as_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["restarts"] = list(out["restarts"])
        return out
