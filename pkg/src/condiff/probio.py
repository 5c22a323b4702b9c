"""Problem files and analysis reports.

Problem files are JSON documents::

    {
      "variables": ["x", "y", "z"],
      "objective": "x^3 + y^3 + z^3",
      "constraints": [{"expr": "1/x + 1/y + 1/z", "target": 1, "homogeneity": -1}],
      "points": {"P333": [3, 3, 3]},
      "scheme": "orthogonal",                 # or "homogeneous" or {"custom": [...]}
      "solver": {"box": [[-3, 5], [-3, 5], [-3, 5]], "starts": 400, "seed": 42},
      "tolerances": {"zero_rel": 1e-7, "cosine": 0.999, "stationarity": 1e-8, "kkt": 1e-10}
    }

Reports serialize every float with 17 significant digits, so re-reading a
report reproduces its numbers bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional

import jsonschema
import numpy as np

from . import __version__
from .classify import Classification, Tolerances
from .chessian import ConstrainedJet
from .errors import CondiffError, SchemaError
from .expr import Expr, parse
from .projection import HOMOGENEOUS, ORTHOGONAL, ConstraintSpec, Custom, WeightScheme
from .solver import NewtonOptions

_NUMBER = {"type": "number"}

PROBLEM_SCHEMA = {
    "type": "object",
    "required": ["variables", "objective", "constraints"],
    "additionalProperties": False,
    "properties": {
        "variables": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "objective": {"type": "string"},
        "constraints": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["expr", "target"],
                "additionalProperties": False,
                "properties": {
                    "expr": {"type": "string"},
                    "target": _NUMBER,
                    "homogeneity": {"type": "integer"},
                },
            },
        },
        "points": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": _NUMBER},
        },
        "scheme": {
            "oneOf": [
                {"enum": ["orthogonal", "homogeneous"]},
                {
                    "type": "object",
                    "required": ["custom"],
                    "additionalProperties": False,
                    "properties": {"custom": {"type": "array", "items": {"type": "string"}}},
                },
            ]
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "required": ["box"],
            "properties": {
                "box": {
                    "type": "array",
                    "items": {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2},
                },
                "starts": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in ("zero_rel", "cosine", "stationarity", "kkt")},
        },
    },
}


# ---------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class SolverConfig:
    box: tuple
    starts: int = 400
    seed: int = 0
    options: NewtonOptions = NewtonOptions()


@dataclass
class Problem:
    variables: List[str]
    objective: Expr
    constraints: List[ConstraintSpec]
    points: Dict[str, np.ndarray] = field(default_factory=dict)
    scheme: WeightScheme = ORTHOGONAL
    solver: Optional[SolverConfig] = None
    tolerances: Tolerances = Tolerances()
    digest: Optional[str] = None
    source: Optional[str] = None

    @property
    def n(self):
        return len(self.variables)

    @property
    def constraint(self) -> ConstraintSpec:
        return self.constraints[0]

    def point(self, spec: str) -> np.ndarray:
        """A named point, or comma-separated coordinates."""
        if spec in self.points:
            return self.points[spec]
        try:
            coords = np.array([float(v) for v in spec.split(",")])
        except ValueError:
            raise KeyError(f"unknown point {spec!r}; named points: {sorted(self.points)}") from None
        if len(coords) != self.n:
            raise KeyError(f"point {spec!r} has {len(coords)} coordinates, expected {self.n}")
        return coords


def _pointer(parts):
    return "/" + "/".join(str(p) for p in parts) if parts else "/"


def _schema_error(doc):
    validator = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(e.absolute_path), e.message))
    if not errors:
        return None
    err = jsonschema.exceptions.best_match(errors)
    path = list(err.absolute_path)
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            path.append(missing[0])
            return SchemaError("required property is missing", _pointer(path))
    return SchemaError(err.message, _pointer(path))


def _parse_scheme(raw, variables):
    if raw is None or raw == "orthogonal":
        return ORTHOGONAL
    if raw == "homogeneous":
        return HOMOGENEOUS
    weights = raw["custom"]
    if len(weights) != len(variables):
        raise SchemaError(f"{len(weights)} custom weights for {len(variables)} variables",
                          "/scheme/custom")
    return Custom(tuple(parse(w, variables) for w in weights))


def problem_from_dict(doc, digest=None, source=None) -> Problem:
    """Validate a decoded problem document and build a :class:`Problem`."""
    err = _schema_error(doc)
    if err is not None:
        raise err
    variables = list(doc["variables"])
    if len(set(variables)) != len(variables):
        raise SchemaError("duplicate variable names", "/variables")
    objective = parse(doc["objective"], variables)
    constraints = []
    for raw in doc["constraints"]:
        spec = ConstraintSpec(parse(raw["expr"], variables), float(raw["target"]),
                              raw.get("homogeneity"))
        spec.check_homogeneity()
        constraints.append(spec)
    points = {}
    for name, coords in doc.get("points", {}).items():
        if len(coords) != len(variables):
            raise SchemaError(f"point has {len(coords)} coordinates, expected {len(variables)}",
                              f"/points/{name}")
        points[name] = np.array(coords, dtype=float)
    tol = doc.get("tolerances", {})
    tolerances = Tolerances(**{k: float(v) for k, v in tol.items() if k != "kkt"})
    solver = None
    if "solver" in doc:
        raw = doc["solver"]
        if len(raw["box"]) != len(variables):
            raise SchemaError(f"box has {len(raw['box'])} intervals, expected {len(variables)}",
                              "/solver/box")
        for i, (lo, hi) in enumerate(raw["box"]):
            if hi < lo:
                raise SchemaError("interval upper bound below lower bound", f"/solver/box/{i}")
        options = NewtonOptions(tol=float(tol["kkt"])) if "kkt" in tol else NewtonOptions()
        solver = SolverConfig(tuple(tuple(float(v) for v in b) for b in raw["box"]),
                              int(raw.get("starts", 400)), int(raw.get("seed", 0)), options)
    return Problem(variables, objective, constraints, points,
                   _parse_scheme(doc.get("scheme"), variables), solver, tolerances,
                   digest, source)


def load_problem(path) -> Problem:
    """Read, validate and parse a problem file."""
    path = Path(path)
    data = path.read_bytes()
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"not a JSON document: {exc}") from None
    return problem_from_dict(doc, hashlib.sha256(data).hexdigest(), str(path))


def bundled_problem_path(name="hassell_rees.json") -> Path:
    """Path of a problem file shipped with the package."""
    return Path(str(resources.files("condiff") / "data" / name))


# ---------------------------------------------------------------------------
# reports


@dataclass
class PointRecord:
    name: str
    point: List[float]
    residual: float
    mu: float
    method: str
    scheme: str
    hessian: List[List[float]]
    raw_asymmetry: float
    spectrum: List[dict]
    excluded: List[dict]
    verdict: str
    morse_index: int
    diagnostics: List[str] = field(default_factory=list)

    @classmethod
    def build(cls, name, jet: ConstrainedJet, cls_: Classification):
        return cls(
            name=name,
            point=[float(v) for v in jet.point],
            residual=jet.stationarity,
            mu=float(jet.mu),
            method=jet.method.value,
            scheme=jet.kind.value if jet.kind is not None else jet.scheme.name,
            hessian=[[float(v) for v in row] for row in jet.chess],
            raw_asymmetry=float(jet.raw_asymmetry),
            spectrum=[{"value": float(v), "vector": [float(c) for c in vec]}
                      for v, vec in cls_.spectrum],
            excluded=[{"index": int(i), "cosine": float(c)} for i, c in cls_.excluded],
            verdict=str(cls_.verdict),
            morse_index=int(cls_.index),
            diagnostics=list(cls_.diagnostics),
        )


@dataclass
class SuiteRecord:
    name: str
    passed: bool
    checks: int
    failures: int
    detail: str = ""


@dataclass
class Report:
    command: str
    input_digest: Optional[str] = None
    tool_version: str = __version__
    points: List[PointRecord] = field(default_factory=list)
    suites: List[SuiteRecord] = field(default_factory=list)
    errors: List[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "tool": {"name": "condiff", "version": self.tool_version},
            "command": self.command,
            "input_sha256": self.input_digest,
            "points": [vars(p).copy() for p in self.points],
            "suites": [vars(s).copy() for s in self.suites],
            "errors": list(self.errors),
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(command=doc["command"], input_digest=doc.get("input_sha256"),
                   tool_version=doc["tool"]["version"],
                   points=[PointRecord(**p) for p in doc.get("points", [])],
                   suites=[SuiteRecord(**s) for s in doc.get("suites", [])],
                   errors=list(doc.get("errors", [])), extra=doc.get("extra", {}))

    def dumps(self):
        return dumps(self.to_dict())

    def write(self, path):
        Path(path).write_text(self.dumps() + "\n", encoding="utf-8")

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def read(cls, path):
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def format_float(x: float) -> str:
    """17 significant digits, always recognisable as a float."""
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = f"{x:.17g}"
    if not any(ch in text for ch in ".en"):
        text += ".0"
    return text


def _is_flat(value):
    return isinstance(value, list) and all(not isinstance(v, (list, dict)) for v in value)


def dumps(obj, indent=2, _level=0) -> str:
    """JSON text with 17-significant-digit floats; key order is preserved."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        obj = list(obj)
        if not obj:
            return "[]"
        if _is_flat(obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (pad + json.dumps(str(k)) + ": " + dumps(v, indent, _level + 1)
                 for k, v in obj.items())
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def error_record(exc: CondiffError, **context):
    return {"code": exc.code, "message": str(exc), **context}
