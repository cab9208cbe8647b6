"""Scenario documents: JSON schema, cross-checks and object construction."""

from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .functionals import (
    DISTORTIONS,
    Choquet,
    Entropic,
    Functional,
    FunctionalError,
    Linear,
    QuasiArithmetic,
    Tabulated,
)
from .risk import ConditionalEV, EntropicRM, ScalarRiskFunctional, mean_variance_rho0
from .space import FiniteSpace, SigmaAlgebra, SpaceError, partition_from_labels


class ScenarioError(ValueError):
    """The scenario document is malformed or inconsistent."""


_NUMBER_LIST = {"type": "array", "items": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "required": ["v", "space", "sigma"],
    "additionalProperties": False,
    "properties": {
        "v": {"const": 1},
        "name": {"type": "string"},
        "space": {
            "type": "object",
            "required": ["outcomes"],
            "additionalProperties": False,
            "properties": {
                "outcomes": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "weights": _NUMBER_LIST,
            },
        },
        "sigma": {
            "type": "object",
            "required": ["labels"],
            "additionalProperties": False,
            "properties": {"labels": {"type": "array", "items": {"type": ["string", "integer"]}}},
        },
        "functional": {
            "type": "object",
            "required": ["family"],
            "properties": {
                "family": {"enum": ["linear", "quasi_arithmetic", "entropic", "choquet",
                                    "tabulated"]},
                "gamma": {"type": "number", "exclusiveMinimum": 0},
                "utility": {"type": "string"},
                "distortion": {"enum": sorted(DISTORTIONS)},
                "expression": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "f": _NUMBER_LIST,
        "risk": {
            "type": "object",
            "required": ["family"],
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["entropic", "conditional_ev", "mean_variance"]},
                "gamma": {"type": "number", "exclusiveMinimum": 0},
                "coeff": {"type": "number"},
            },
        },
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seed": {"type": "integer"},
                "tol_solve": {"type": "number", "exclusiveMinimum": 0},
                "cap": {"type": "integer", "minimum": 1},
                "n_samples": {"type": "integer", "minimum": 1},
                "n_X": {"type": "integer", "minimum": 1},
                "x_grid": _NUMBER_LIST,
                "value_grid": _NUMBER_LIST,
                "null_value": {"type": "number"},
            },
        },
    },
}

# Named utilities for the quasi-arithmetic family: (U, U^{-1}).
UTILITIES = {
    "identity": (lambda x: x, lambda y: y),
    "exp": (np.exp, np.log),
    "cubic": (lambda x: x ** 3 + x, None),
    "arctan": (lambda x: 2.0 * np.arctan(x) + 0.1 * x + 1.0, None),
}

_FUNCS = {
    "sum": np.sum, "dot": np.dot, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
    "abs": np.abs, "max": np.max, "min": np.min, "mean": np.mean, "where": np.where,
    "sign": np.sign, "arctan": np.arctan, "tanh": np.tanh, "maximum": np.maximum,
    "minimum": np.minimum,
}
_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Subscript, ast.Compare, ast.IfExp, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow,
    ast.USub, ast.UAdd, ast.Gt, ast.GtE, ast.Lt, ast.LtE, ast.Eq, ast.NotEq,
)


def compile_expression(source: str, variables: tuple[str, ...]):
    """Compile an arithmetic expression over ``variables`` and a few numpy
    functions. Attribute access, lambdas and non-numeric constants are
    rejected before evaluation."""
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ScenarioError(f"cannot parse expression {source!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _NODES):
            raise ScenarioError(f"expression {source!r}: {type(node).__name__} not allowed")
        if isinstance(node, ast.Name) and node.id not in _FUNCS and node.id not in variables:
            raise ScenarioError(f"expression {source!r}: unknown name {node.id!r}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name)
                                               and node.func.id in _FUNCS):
            raise ScenarioError(f"expression {source!r}: only whitelisted calls allowed")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ScenarioError(f"expression {source!r}: non-numeric constant")
    code = compile(tree, "<expression>", "eval")

    def fn(*args):
        scope = dict(_FUNCS)
        scope.update(zip(variables, args))
        return eval(code, {"__builtins__": {}}, scope)

    return fn


@dataclass
class Options:
    seed: int = 0
    tol_solve: float = 1e-8
    cap: int = 24
    n_samples: int = 500
    n_X: int = 20
    x_grid: tuple[float, ...] | None = None
    value_grid: tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    null_value: float = 0.0


@dataclass
class Scenario:
    name: str
    space: FiniteSpace
    sigma: SigmaAlgebra
    weights: np.ndarray
    functional_spec: dict | None
    f: np.ndarray | None
    risk_spec: dict | None
    options: Options = field(default_factory=Options)

    def functional(self) -> Functional:
        if self.functional_spec is None:
            raise ScenarioError("scenario has no functional")
        return build_functional(self.functional_spec, self.weights)

    def require_f(self) -> np.ndarray:
        if self.f is None:
            raise ScenarioError("scenario has no f vector")
        return self.f


def build_functional(spec: dict, weights: np.ndarray) -> Functional:
    fam = spec["family"]
    try:
        if fam == "linear":
            return Linear(weights)
        if fam == "entropic":
            if "gamma" not in spec:
                raise ScenarioError("entropic functional needs gamma")
            return Entropic(weights, spec["gamma"])
        if fam == "choquet":
            return Choquet(weights, spec.get("distortion", "square"))
        if fam == "quasi_arithmetic":
            name = spec.get("utility")
            if name in UTILITIES:
                u, inv = UTILITIES[name]
                return QuasiArithmetic(weights, u, inv, name=name)
            if "expression" in spec:
                u = compile_expression(spec["expression"], ("x",))
                return QuasiArithmetic(weights, lambda x: np.asarray(u(x), dtype=float),
                                       name=spec["expression"])
            raise ScenarioError(f"quasi_arithmetic needs a utility in {sorted(UTILITIES)} "
                                "or an expression in x")
        if fam == "tabulated":
            if "expression" not in spec:
                raise ScenarioError("tabulated functional needs an expression in f and p")
            expr = compile_expression(spec["expression"], ("f", "p"))
            return Tabulated(weights.size, lambda f: float(expr(f, weights)), weights,
                             name=spec["expression"])
    except ScenarioError:
        raise
    except (FunctionalError, ArithmeticError, TypeError, IndexError, ValueError) as exc:
        raise ScenarioError(f"invalid {fam} functional: {exc}") from exc
    raise ScenarioError(f"unknown functional family {fam!r}")


def build_risk(spec: dict, P: np.ndarray):
    """A conditional risk measure, or a bare scalar functional for ``mean_variance``."""
    fam = spec["family"]
    if fam == "entropic":
        return EntropicRM(spec.get("gamma", 1.0))
    if fam == "conditional_ev":
        return ConditionalEV()
    return mean_variance_rho0(P, spec.get("coeff", 0.1))


def parse_scenario(doc: dict) -> Scenario:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema violation at {where}: {exc.message}") from None

    outcomes = doc["space"]["outcomes"]
    n = len(outcomes)
    weights = doc["space"].get("weights")
    weights = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    try:
        space = FiniteSpace(tuple(outcomes), weights)
        sigma = partition_from_labels(space, doc["sigma"]["labels"])
    except SpaceError as exc:
        raise ScenarioError(str(exc)) from None

    f = doc.get("f")
    if f is not None:
        f = np.asarray(f, dtype=float)
        if f.shape != (n,):
            raise ScenarioError(f"f has {f.size} values but the space has {n} outcomes")

    opts = dict(doc.get("options", {}))
    for key in ("x_grid", "value_grid"):
        if key in opts:
            if not opts[key]:
                raise ScenarioError(f"options.{key} must be nonempty")
            opts[key] = tuple(float(x) for x in opts[key])
    options = Options(**opts)

    scenario = Scenario(doc.get("name", "scenario"), space, sigma, space.base_weights,
                        doc.get("functional"), f, doc.get("risk"), options)
    if scenario.functional_spec is not None:
        scenario.functional()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    return parse_scenario(doc)


def is_scalar_only(risk) -> bool:
    return isinstance(risk, ScalarRiskFunctional)
