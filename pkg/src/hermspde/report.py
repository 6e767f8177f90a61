"""Check records and experiment reports shared by experiments, acceptance and the CLI."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    relation: str = "<="
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        text = f"[{mark}] {self.name}: measured {_fmt(self.value)} {self.relation} {_fmt(self.tolerance)}"
        return text + (f"  ({self.detail})" if self.detail else "")

    def to_dict(self):
        return {"name": self.name, "value": _jsonable(self.value), "tolerance": _jsonable(self.tolerance),
                "relation": self.relation, "passed": bool(self.passed), "detail": self.detail}


def check_le(name, value, tol, detail="") -> Check:
    value = float(value)
    return Check(name, value, float(tol), bool(np.isfinite(value) and value <= tol), "<=", detail)


def check_ge(name, value, tol, detail="") -> Check:
    value = float(value)
    return Check(name, value, float(tol), bool(np.isfinite(value) and value >= tol), ">=", detail)


def check_true(name, flag, detail="") -> Check:
    return Check(name, float(bool(flag)), 1.0, bool(flag), "==", detail)


@dataclass
class Report:
    experiment: str
    metrics: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    series: dict = field(default_factory=dict)   # name -> (header list, rows array)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_dict(self):
        return {"experiment": self.experiment, "passed": self.passed,
                "metrics": {k: _jsonable(v) for k, v in self.metrics.items()},
                "checks": [c.to_dict() for c in self.checks]}

    def series_csv(self, name: str) -> str:
        header, rows = self.series[name]
        lines = [",".join(header)]
        for row in np.atleast_2d(rows):
            lines.append(",".join(f"{float(v):.17g}" for v in row))
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float) and (math.isinf(v) or math.isnan(v)):
        return str(v)
    return f"{v:.6g}"


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in np.asarray(v, dtype=object).tolist()] if np.ndim(v) else _jsonable(np.asarray(v).item())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True)
