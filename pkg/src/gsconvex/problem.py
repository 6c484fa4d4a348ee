"""Problem files: a versioned TOML document naming functions, maps and tasks.

Minimal example::

    schema_version = 1
    arity = 1
    s = 0.5

    [domain]
    lo = [1.0]
    hi = [inf]
    truncation_bound = 10.0

    [functions]
    h = "((x1-1)^2+(x1-1))^s"

    [maps]
    theta = "sigma*(2*x1+6)"

    [check]
    function = "h"
    map = "theta"
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .defcheck import ONE_POINT, TWO_POINT, ModifierMap
from .expr import ArityError, Expr, ExprSyntaxError, parse
from .sampling import BoxDomain, SamplePlan, default_sigma_grid

SCHEMA_VERSION = 1

_num = {"type": "number"}
_name = {"type": "string", "minLength": 1}
_ref = {
    "type": "object",
    "required": ["function"],
    "properties": {"function": _name, "map": _name},
    "additionalProperties": False,
}
_vector = {"type": "array", "items": _num, "minItems": 1}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "arity", "s", "domain"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "arity": {"type": "integer", "minimum": 1},
        "s": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "domain": {
            "type": "object",
            "required": ["lo", "hi"],
            "additionalProperties": False,
            "properties": {
                "lo": _vector,
                "hi": {"type": "array", "minItems": 1, "items": {"anyOf": [_num, {"enum": ["inf", "+inf"]}]}},
                "truncation_bound": _num,
            },
        },
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_pairs": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "sigma_grid": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "tol": {"type": "number", "minimum": 0},
                "rtol": {"type": "number", "minimum": 0},
                "grid_n": {"type": "integer", "minimum": 2},
            },
        },
        "functions": {"type": "object", "additionalProperties": {"type": "string"}},
        "maps": {
            "type": "object",
            "additionalProperties": {
                "anyOf": [
                    {"type": "string"},
                    {
                        "type": "object",
                        "required": ["expr"],
                        "additionalProperties": False,
                        "properties": {"expr": {"type": "string"}, "kind": {"enum": [ONE_POINT, TWO_POINT]}},
                    },
                ]
            },
        },
        "check": {
            "type": "object",
            "required": ["function"],
            "additionalProperties": False,
            "properties": {
                "function": _name,
                "map": _name,
                "definition": {"enum": ["general", "second-sense", "sub-b", "sub-b-s", "convex"]},
                "strict": {"type": "boolean"},
            },
        },
        "sets": {
            "type": "object",
            "required": ["functions"],
            "additionalProperties": False,
            "properties": {
                "functions": {"type": "array", "items": _name, "minItems": 1},
                "map": _name,
                "beta_offsets": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
            },
        },
        "algebra": {
            "type": "object",
            "required": ["op", "instances"],
            "additionalProperties": False,
            "properties": {
                "op": {"enum": ["sum", "scale", "weighted-sum", "max", "composition", "sup"]},
                "instances": {"type": "array", "items": _ref, "minItems": 1},
                "alpha": _num,
                "alphas": {"type": "array", "items": _num},
                "slope": _num,
                "intercept": _num,
            },
        },
        "gradineq": {
            "type": "object",
            "required": ["function"],
            "additionalProperties": False,
            "properties": {
                "function": _name,
                "map": _name,
                "theorems": {"type": "array", "items": {"enum": ["theorem4", "theorem5", "corollary2"]}},
            },
        },
        "optimize": {
            "type": "object",
            "required": ["function", "b2"],
            "additionalProperties": False,
            "properties": {
                "function": _name,
                "map": _name,
                "b2": _vector,
                "perturbations": {"type": "integer", "minimum": 1},
            },
        },
        "kkt": {
            "type": "object",
            "required": ["function", "constraints", "b_star", "multipliers"],
            "additionalProperties": False,
            "properties": {
                "function": _name,
                "map": _name,
                "constraints": {"type": "array", "items": _ref},
                "b_star": _vector,
                "multipliers": {"type": "array", "items": _num},
            },
        },
        "oracle": {
            "type": "object",
            "required": ["function"],
            "additionalProperties": False,
            "properties": {"function": _name, "grid_n": {"type": "integer", "minimum": 2}},
        },
    },
}


class SchemaError(ValueError):
    """Problem file does not match the schema; ``path`` locates the field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


@dataclass
class Problem:
    raw: dict
    arity: int
    s: float
    domain: BoxDomain
    plan: SamplePlan
    tol: float
    rtol: float
    grid_n: int
    functions: dict
    maps: dict

    def function(self, name: str, where: str) -> Expr:
        if name not in self.functions:
            raise SchemaError(where, f"unknown function {name!r}")
        return self.functions[name]

    def map(self, name: str | None, where: str, kind=ONE_POINT) -> ModifierMap:
        if name is None:
            return ModifierMap.zero(kind)
        if name not in self.maps:
            raise SchemaError(where, f"unknown map {name!r}")
        mp = self.maps[name]
        if mp.kind != kind:
            raise SchemaError(where, f"map {name!r} is {mp.kind}, expected {kind}")
        return mp

    def section(self, name: str) -> dict:
        if name not in self.raw:
            raise SchemaError(name, "section is required for this command")
        return self.raw[name]


def bundled_problems() -> dict:
    root = resources.files("gsconvex") / "problems"
    return {p.name[:-5]: p for p in root.iterdir() if p.name.endswith(".toml")}


def read_problem_text(source: str) -> str:
    path = Path(source)
    if path.exists():
        return path.read_text(encoding="utf-8")
    bundled = bundled_problems()
    key = source[:-5] if source.endswith(".toml") else source
    if key in bundled:
        return bundled[key].read_text(encoding="utf-8")
    raise FileNotFoundError(f"no problem file {source!r} (bundled: {', '.join(sorted(bundled))})")


def build_problem(raw: dict, overrides: dict | None = None) -> Problem:
    """Validate ``raw`` (a decoded problem document), apply CLI overrides, build objects."""
    raw = copy.deepcopy(raw)
    overrides = overrides or {}
    plan_raw = raw.setdefault("plan", {})
    for key in ("tol", "seed", "n_pairs"):
        if overrides.get(key) is not None:
            plan_raw[key] = overrides[key]
    if overrides.get("truncate") is not None:
        raw.setdefault("domain", {})["truncation_bound"] = overrides["truncate"]
    if overrides.get("strict") and "check" in raw:
        raw["check"]["strict"] = True

    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        raise SchemaError(_path(err.absolute_path), err.message)

    m, s = raw["arity"], float(raw["s"])
    dom = raw["domain"]
    hi = [math.inf if isinstance(v, str) else float(v) for v in dom["hi"]]
    if len(dom["lo"]) != m or len(hi) != m:
        raise SchemaError("domain", f"lo and hi must have length arity={m}")
    domain = BoxDomain(dom["lo"], hi, dom.get("truncation_bound", 10.0))
    try:
        domain.validate()
    except ValueError as exc:
        raise SchemaError("domain", str(exc)) from None
    try:
        plan = SamplePlan(
            n_pairs=plan_raw.get("n_pairs", 512),
            sigma_grid=tuple(plan_raw.get("sigma_grid", default_sigma_grid())),
            seed=plan_raw.get("seed", 0),
            s=s,
        )
    except ValueError as exc:
        raise SchemaError("plan", str(exc)) from None

    functions, maps = {}, {}
    for name, text in raw.get("functions", {}).items():
        functions[name] = _parse_field(text, m, s, f"functions.{name}")
    for name, spec in raw.get("maps", {}).items():
        text, kind = (spec, ONE_POINT) if isinstance(spec, str) else (spec["expr"], spec.get("kind", ONE_POINT))
        n = m if kind == ONE_POINT else 2 * m
        maps[name] = ModifierMap(_parse_field(text, n, s, f"maps.{name}"), kind)
    return Problem(raw, m, s, domain, plan, float(plan_raw.get("tol", 1e-9)), float(plan_raw.get("rtol", 1e-9)),
                   int(plan_raw.get("grid_n", 10001)), functions, maps)


def _parse_field(text, arity, s, where):
    try:
        return parse(text, arity, s)
    except (ExprSyntaxError, ArityError) as exc:
        raise SchemaError(where, str(exc)) from None


def load_problem(source: str, overrides: dict | None = None) -> Problem:
    try:
        raw = tomllib.loads(read_problem_text(source))
    except tomllib.TOMLDecodeError as exc:
        raise SchemaError("", f"invalid TOML: {exc}") from None
    return build_problem(raw, overrides)
