"""Pass/fail bookkeeping for sampled audits."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class AuditEntry:
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ""

    def as_dict(self):
        return {
            "name": self.name,
            "value": float(self.value),
            "threshold": float(self.threshold),
            "passed": bool(self.passed),
            "detail": self.detail,
        }


@dataclass
class AuditReport:
    """Ordered list of checks; a check passes when ``value <= threshold``."""

    title: str
    entries: list = field(default_factory=list)

    def add(self, name, value, threshold, strict=False, detail=""):
        value = float(value)
        ok = value < threshold if strict else value <= threshold
        self.entries.append(AuditEntry(name, value, float(threshold), bool(ok), detail))
        return ok

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self):
        return [e.name for e in self.entries if not e.passed]

    def __getitem__(self, name):
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def as_dict(self):
        return {"title": self.title, "passed": self.passed, "entries": [e.as_dict() for e in self.entries]}
