"""Named inequality/identity checks with pass flags and deterministic JSON output."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

KINDS = ("upper", "lower", "residual")


@dataclass
class Check:
    """One certified quantity.

    ``upper``: pass iff value <= bound * (1 + tolerance).
    ``lower``: pass iff value >= bound * (1 - tolerance).
    ``residual``: pass iff |value| <= tolerance * bound (``bound`` is the scale).
    """

    name: str
    value: float
    bound: float
    tolerance: float
    kind: str = "upper"
    provenance: str = "plumbing"
    standard_error: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown check kind {self.kind!r}")
        if not self.provenance:
            raise ValueError("provenance must be nonempty")
        self.value = float(self.value)
        self.bound = float(self.bound)
        self.tolerance = float(self.tolerance)

    @property
    def passed(self) -> bool:
        v, b, t = self.value, self.bound, self.tolerance
        if math.isnan(v):
            return False
        if self.kind == "upper":
            return v <= b * (1.0 + t)
        if self.kind == "lower":
            return v >= b * (1.0 - t)
        return abs(v) <= t * b

    def as_dict(self) -> dict:
        out = {
            "name": self.name,
            "value": self.value,
            "bound": self.bound,
            "tolerance": self.tolerance,
            "kind": self.kind,
            "pass": self.passed,
            "provenance": self.provenance,
        }
        if self.standard_error is not None:
            out["standard_error"] = float(self.standard_error)
        if self.extra:
            out["extra"] = self.extra
        return out


@dataclass
class VerificationReport:
    title: str
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def add(self, name, value, bound, tolerance=0.0, kind="upper", provenance="plumbing",
            standard_error=None, **extra) -> Check:
        chk = Check(name, value, bound, tolerance, kind, provenance, standard_error, extra)
        self.checks.append(chk)
        return chk

    def extend(self, other: "VerificationReport", prefix: str = "") -> None:
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.value, c.bound, c.tolerance, c.kind,
                                     c.provenance, c.standard_error, dict(c.extra)))
        for k, v in other.info.items():
            self.info[prefix + k] = v

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "title": self.title,
            "pass": self.passed,
            "checks": [c.as_dict() for c in self.checks],
            "info": self.info,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(_jsonable(self.as_dict()), indent=indent, sort_keys=True)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    def summary(self) -> str:
        lines = [f"{self.title}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            flag = "ok " if c.passed else "BAD"
            lines.append(f"  [{flag}] {c.name}: value={c.value:.6g} bound={c.bound:.6g} ({c.kind})")
        return "\n".join(lines)


def _jsonable(obj):
    """Replace non-finite floats and numpy scalars so the JSON is strict and stable."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    return str(obj)
