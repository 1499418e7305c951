"""JSON/CSV serialization and the check/report containers shared by the stages."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1"


def to_jsonable(obj):
    """Plain JSON types; rationals become "p/q" and non-finite floats become strings."""
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_json"):
            return to_jsonable(obj.to_json())
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, obj) -> str:
    path = Path(path)
    path.write_text(dumps(obj))
    return sha256_file(path)


def write_csv(path, header, rows) -> str:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return sha256_file(path)


@dataclass
class CheckResult:
    """One named check. ``passed`` is None for informational entries."""

    name: str
    estimator: str
    budget: dict
    seed: int | None
    measured: dict
    targets: dict = field(default_factory=dict)
    passed: bool | None = None
    skipped: str | None = None
    runtime: float = 0.0


@dataclass
class VerificationReport:
    stage: str
    poly: str
    checks: list[CheckResult] = field(default_factory=list)
    series: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def to_json(self, include_runtime: bool = False) -> dict:
        checks = []
        for c in self.checks:
            d = {f.name: getattr(c, f.name) for f in dataclasses.fields(c)}
            if not include_runtime:
                d.pop("runtime")
            checks.append(d)
        return to_jsonable({
            "schema_version": SCHEMA_VERSION,
            "stage": self.stage,
            "poly": self.poly,
            "passed": self.passed,
            "checks": checks,
        })

    def runtimes(self) -> dict:
        return {c.name: c.runtime for c in self.checks}
