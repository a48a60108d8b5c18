"""Itemized pass/fail reports shared by the verification harnesses."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None = None
    tol: float | None = None
    skipped: bool = False
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "tol": self.tol,
            "skipped": self.skipped,
            "detail": self.detail,
        }


@dataclass
class Report:
    """A named list of checks.

    A report passes when every non-skipped check passes. ``flags`` carries
    informational markers that are not failures (for instance a non-unique
    minimum-mass measure), ``data`` carries any numbers worth keeping.
    """

    name: str
    checks: list[Check] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    data: dict[str, Any] = field(default_factory=dict)

    def add(self, name, passed, value=None, tol=None, detail="") -> Check:
        check = Check(name, bool(passed), None if value is None else float(value), tol, False, detail)
        self.checks.append(check)
        return check

    def skip(self, name, reason="") -> Check:
        check = Check(name, True, skipped=True, detail=reason)
        self.checks.append(check)
        return check

    def extend(self, other: Report, prefix: str | None = None) -> None:
        for c in other.checks:
            name = f"{prefix}.{c.name}" if prefix else c.name
            self.checks.append(Check(name, c.passed, c.value, c.tol, c.skipped, c.detail))
        self.flags.extend(other.flags)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.skipped)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.skipped and not c.passed]

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "flags": list(self.flags),
            "data": self.data,
        }

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "SKIP" if c.skipped else ("PASS" if c.passed else "FAIL")
            extra = "" if c.value is None else f" value={c.value:.3e}"
            if c.tol is not None:
                extra += f" tol={c.tol:.0e}"
            if c.detail:
                extra += f" ({c.detail})"
            out.append(f"[{tag}] {self.name}:{c.name}{extra}")
        return out
