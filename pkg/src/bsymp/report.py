"""Structured verification results.

Every numeric check is a :class:`Residual` carrying its value, its tolerance
and the comparison direction, so a report never holds an implicit threshold.
``to_dict`` output is JSON-ready and deterministic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Residual", "VerificationReport", "LocusReport", "EquivalenceReport", "jsonable"]


def jsonable(obj):
    """Convert numpy scalars/arrays and tuples into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float(f"{v:.12g}")
    if hasattr(obj, "to_dict"):
        return jsonable(obj.to_dict())
    return obj


@dataclass(frozen=True)
class Residual:
    """``value`` compared against ``tol``; ``kind`` is ``"max"`` (value < tol) or ``"min"`` (value > tol)."""

    name: str
    value: float
    tol: float
    kind: str = "max"

    @property
    def passed(self) -> bool:
        v = float(self.value)
        if not math.isfinite(v):
            return False
        return v < self.tol if self.kind == "max" else v > self.tol

    def to_dict(self):
        return {"name": self.name, "value": self.value, "tol": self.tol,
                "kind": self.kind, "passed": self.passed}


@dataclass
class VerificationReport:
    task: str
    residuals: list = field(default_factory=list)
    grid: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def add(self, name, value, tol, kind="max") -> Residual:
        r = Residual(name, float(value), float(tol), kind)
        self.residuals.append(r)
        return r

    def check(self, name, ok: bool):
        """Boolean (non-numeric) condition, e.g. a symbolic identity."""
        self.checks[name] = bool(ok)

    def merge(self, other: "VerificationReport", prefix=None):
        pre = f"{prefix or other.task}." if (prefix or other.task) else ""
        for r in other.residuals:
            self.residuals.append(Residual(pre + r.name, r.value, r.tol, r.kind))
        for k, v in other.checks.items():
            self.checks[pre + k] = v
        for k, v in other.provenance.items():
            self.provenance[pre + k] = v
        self.notes.extend(other.notes)
        return self

    def residual(self, name) -> Residual:
        for r in self.residuals:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.residuals) and all(self.checks.values())

    def failures(self) -> list:
        out = [r.name for r in self.residuals if not r.passed]
        out += [k for k, v in self.checks.items() if not v]
        return out

    def to_dict(self) -> dict:
        return jsonable({
            "task": self.task, "passed": self.passed,
            "residuals": [r.to_dict() for r in self.residuals],
            "checks": dict(sorted(self.checks.items())),
            "grid": self.grid, "provenance": self.provenance, "notes": list(self.notes),
        })

    def __bool__(self):
        return self.passed


@dataclass
class LocusReport:
    """Zeros of the top-power coefficient found along lines in ``coord``.

    ``roots`` holds full chart points (one row per zero), ``derivatives`` the
    transverse derivative of the coefficient there and ``margin`` their
    smallest magnitude.
    """

    coord: str
    coord_index: int
    roots: np.ndarray
    derivatives: np.ndarray
    lines: int
    threshold: float

    @property
    def empty(self) -> bool:
        return len(self.roots) == 0

    @property
    def margin(self) -> float:
        return float(np.min(np.abs(self.derivatives))) if not self.empty else math.inf

    @property
    def max_derivative(self) -> float:
        return float(np.max(np.abs(self.derivatives))) if not self.empty else math.inf

    def root_values(self, digits=8) -> list:
        """Distinct values of the transverse coordinate at the zeros."""
        if self.empty:
            return []
        return sorted(set(np.round(self.roots[:, self.coord_index], digits).tolist()))

    def to_dict(self) -> dict:
        return jsonable({
            "coord": self.coord, "empty": self.empty, "count": int(len(self.roots)),
            "margin": None if self.empty else self.margin,
            "max_derivative": None if self.empty else self.max_derivative,
            "threshold": self.threshold, "lines": self.lines, "root_values": self.root_values(),
        })


@dataclass
class EquivalenceReport:
    """Both sides of ``d theta = d eta = 0  <=>  [R, nu] = [nu, nu] = 0``."""

    d_theta: float
    d_eta: float
    bracket_r_nu: float
    bracket_nu_nu: float
    tol_forms: float
    tol_brackets: float

    @property
    def forms_closed(self) -> bool:
        return self.d_theta < self.tol_forms and self.d_eta < self.tol_forms

    @property
    def brackets_vanish(self) -> bool:
        return self.bracket_r_nu < self.tol_brackets and self.bracket_nu_nu < self.tol_brackets

    @property
    def consistent(self) -> bool:
        return self.forms_closed == self.brackets_vanish

    def to_report(self, task="closedness_equivalence") -> VerificationReport:
        rep = VerificationReport(task)
        rep.provenance.update({"d_theta": self.d_theta, "d_eta": self.d_eta,
                               "bracket_R_nu": self.bracket_r_nu, "bracket_nu_nu": self.bracket_nu_nu,
                               "forms_closed": self.forms_closed, "brackets_vanish": self.brackets_vanish})
        rep.check("biconditional", self.consistent)
        return rep

    def to_dict(self):
        return self.to_report().to_dict()
