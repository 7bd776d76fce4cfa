"""Run configuration: JSON schema, built-in kernel registry and model construction."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Optional

import jsonschema
import numpy as np

from .hubbard import Example5Params, example_model, phi, potential_u
from .operators import (
    DEFAULT_DENSE_CAP,
    KERNEL_X,
    KERNEL_Y,
    POTENTIAL,
    AxisSpec,
    KernelSpec,
    ModelSpec,
    constant_kernel,
    product_potential,
    rank_sum_kernel,
    zero_kernel,
)
from .quadrature import DEFAULT_ORDER

EXPERIMENTS = ("spectrum", "essential", "condition5", "condition6", "thm41", "accumulate", "example5")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


_number = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^\s*-?\d+(\.\d*)?\s*(/\s*\d+\s*)?$"}]}

_basis_term = {
    "type": "object",
    "required": ["coef", "basis"],
    "additionalProperties": False,
    "properties": {"coef": _number, "basis": {"type": "string"}, "index": {"type": "integer", "minimum": 0}},
}

_kernel = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "value": _number,
        "N": {"type": "integer", "minimum": 1},
        "M": {"type": "integer", "minimum": 2},
        "delta_scale": {"type": "number", "minimum": 0, "maximum": 1},
        "rank_sum": {"type": "array", "items": _basis_term},
        "infinite_rank": {"type": "boolean"},
    },
}

_axis = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "domain": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "breakpoints": {"type": "array", "items": {"type": "number"}},
        "g": {"type": "integer", "minimum": 1},
    },
}

_row = {
    "type": "object",
    "required": ["N"],
    "additionalProperties": False,
    "properties": {
        "M": {"type": "integer", "minimum": 2},
        "N": {"type": "integer", "minimum": 1},
        "g": {"type": "integer", "minimum": 1},
    },
}

CONFIG_SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "efimovlab run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "model": {
            "type": "object",
            "required": ["type"],
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["example5", "inline"]},
                "gamma": _number,
                "M": {"type": "integer"},
                "N": {"type": "integer"},
                "g": {"type": "integer"},
                "delta_scale": {"type": "number"},
                "infinite_series": {"type": "boolean"},
                "k0": _kernel,
                "k1": _kernel,
                "k2": _kernel,
                "x_axis": _axis,
                "y_axis": _axis,
            },
        },
        "schedule": {"type": "array", "items": _row, "minItems": 1},
        "kappas": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        "family": {
            "type": "object",
            "required": ["basis", "indices"],
            "additionalProperties": False,
            "properties": {
                "basis": {"type": "string"},
                "indices": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"count_tol": {"type": "number", "exclusiveMinimum": 0}},
        },
        "dense_cap": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "out": {"type": "string"},
    },
}


def parse_number(value, key: str) -> float:
    """Accept JSON numbers and fraction strings such as ``"2/3"``."""
    if isinstance(value, bool):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(Fraction(str(value).replace(" ", "")))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} as a number") from exc


# --------------------------------------------------------------------------
# basis and kernel registry
# --------------------------------------------------------------------------


def _basis_constant(n: int, a: float, b: float):
    if n != 0:
        raise ConfigError(f"basis 'constant' has only index 0, got {n}")
    c = 1.0 / np.sqrt(b - a)
    return lambda x: np.full(np.shape(x), c)


def _basis_legendre(n: int, a: float, b: float):
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    scale = np.sqrt((2 * n + 1) / (b - a))
    return lambda x: scale * np.polynomial.legendre.legval(2 * (np.asarray(x, dtype=float) - a) / (b - a) - 1, coeffs)


def _basis_sine(n: int, a: float, b: float):
    if n < 1:
        raise ConfigError(f"basis 'sine' starts at index 1, got {n}")
    L = b - a
    return lambda x: np.sqrt(2.0 / L) * np.sin(n * np.pi * (np.asarray(x, dtype=float) - a) / L)


def _basis_cosine(n: int, a: float, b: float):
    if n < 1:
        raise ConfigError(f"basis 'cosine' starts at index 1, got {n}")
    L = b - a
    return lambda x: np.sqrt(2.0 / L) * np.cos(n * np.pi * (np.asarray(x, dtype=float) - a) / L)


def _basis_example_phi(n: int, a: float, b: float):
    if (a, b) != (0.0, 1.0):
        raise ConfigError("basis 'example5_phi' lives on [0, 1]")
    if n < 1:
        raise ConfigError(f"basis 'example5_phi' starts at index 1, got {n}")
    return lambda y: phi(n, y)


BASES: dict[str, Callable[[int, float, float], Callable]] = {
    "constant": _basis_constant,
    "legendre": _basis_legendre,
    "sine": _basis_sine,
    "cosine": _basis_cosine,
    "example5_phi": _basis_example_phi,
}


def basis_function(name: str, n: int, domain, key: str = "basis") -> Callable:
    try:
        factory = BASES[name]
    except KeyError:
        raise ConfigError(f"{key}: unknown basis {name!r}; known: {sorted(BASES)}") from None
    return factory(int(n), float(domain[0]), float(domain[1]))


def build_kernel(entry: dict, kind: str, domain, key: str) -> KernelSpec:
    """Named built-in kernel or a rank-sum literal."""
    if "rank_sum" in entry:
        terms = []
        for i, t in enumerate(entry["rank_sum"]):
            tkey = f"{key}.rank_sum[{i}]"
            terms.append(
                (parse_number(t["coef"], f"{tkey}.coef"), basis_function(t["basis"], t.get("index", 0), domain, f"{tkey}.basis"))
            )
        return rank_sum_kernel(kind, terms, infinite_rank=bool(entry.get("infinite_rank", False)))
    name = entry.get("name")
    if name is None:
        raise ConfigError(f"{key}: needs either 'name' or 'rank_sum'")
    if name == "zero":
        return zero_kernel(kind)
    if name == "constant":
        if "value" not in entry:
            raise ConfigError(f"{key}.value: required for the constant kernel")
        return constant_kernel(kind, parse_number(entry["value"], f"{key}.value"), domain)
    if name == "example5_k2" and kind != POTENTIAL:
        return example_model(_example_params(N=entry.get("N", 4))).k2
    if name == "example5_u_product" and kind == POTENTIAL:
        params = _example_params(M=entry.get("M", 4), delta_scale=entry.get("delta_scale", 1.0))
        u = lambda x: potential_u(x, params)  # noqa: E731
        return product_potential(u, u, name="u(x)u(y)")
    raise ConfigError(f"{key}.name: unknown {'potential' if kind == POTENTIAL else 'kernel'} {name!r}")


def _example_params(**kw) -> Example5Params:
    scale = kw.pop("delta_scale", 1.0)
    delta = None
    if scale != 1.0:
        delta = lambda n, s=float(scale): s * (np.sqrt(2.0) / 3.0) ** n if n >= 2 else 1.0  # noqa: E731
    return Example5Params(delta=delta, **kw)


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    experiment: str
    model: dict
    out: str = "out"
    schedule: Optional[list] = None
    kappas: Optional[list] = None
    family: Optional[dict] = None
    count_tol: Optional[float] = None
    dense_cap: int = DEFAULT_DENSE_CAP
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def is_example(self) -> bool:
        return self.model.get("type", "example5") == "example5"

    def example_params(self, **override) -> Example5Params:
        m = dict(self.model)
        kw = dict(
            M=m.get("M", 4),
            N=m.get("N", 4),
            g=m.get("g", DEFAULT_ORDER),
            gamma=parse_number(m.get("gamma", "2/3"), "model.gamma"),
            infinite_series=m.get("infinite_series", True),
            delta_scale=m.get("delta_scale", 1.0),
        )
        kw.update(override)
        try:
            return _example_params(**kw)
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def model_spec(self, g: Optional[int] = None) -> ModelSpec:
        if self.is_example:
            return example_model(self.example_params(**({"g": g} if g else {})))
        m = self.model
        g = g or m.get("g")
        x_axis = _axis_spec(m.get("x_axis", {}), "model.x_axis", g)
        y_axis = _axis_spec(m.get("y_axis", {}), "model.y_axis", g)
        for k in ("k0", "k1", "k2"):
            if k not in m:
                raise ConfigError(f"model.{k}: required for an inline model")
        try:
            return ModelSpec(
                k0=build_kernel(m["k0"], POTENTIAL, None, "model.k0"),
                k1=build_kernel(m["k1"], KERNEL_X, x_axis.domain, "model.k1"),
                k2=build_kernel(m["k2"], KERNEL_Y, y_axis.domain, "model.k2"),
                gamma=parse_number(m.get("gamma", 1.0), "model.gamma"),
                x_axis=x_axis,
                y_axis=y_axis,
                name="inline",
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc


def _axis_spec(entry: dict, key: str, g: Optional[int]) -> AxisSpec:
    domain = tuple(float(v) for v in entry.get("domain", (0.0, 1.0)))
    if domain[0] >= domain[1]:
        raise ConfigError(f"{key}.domain: empty interval {list(domain)}")
    return AxisSpec(domain, tuple(float(v) for v in entry.get("breakpoints", ())), g or entry.get("g", DEFAULT_ORDER))


def validate(raw: dict) -> None:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def load_config(raw: dict, overrides: Optional[dict] = None) -> RunConfig:
    """Validate a configuration document and apply command-line overrides."""
    raw = dict(raw)
    validate(raw)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}

    model = dict(raw.get("model", {"type": "example5"}))
    for key in ("gamma", "M", "N", "g"):
        if key in overrides:
            model[key] = overrides.pop(key)
    experiment = overrides.pop("experiment", raw.get("experiment"))
    if experiment is None:
        raise ConfigError("experiment: required (config key or --experiment)")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown experiment {experiment!r}; expected one of {list(EXPERIMENTS)}")
    if model.get("type", "example5") == "example5":
        for bad in ("k0", "k1", "k2", "x_axis", "y_axis"):
            if bad in model:
                raise ConfigError(f"model.{bad}: only valid for inline models")
    cfg = RunConfig(
        experiment=experiment,
        model=model,
        out=overrides.pop("out", raw.get("out", "out")),
        schedule=raw.get("schedule"),
        kappas=raw.get("kappas"),
        family=raw.get("family"),
        count_tol=raw.get("tolerances", {}).get("count_tol"),
        dense_cap=overrides.pop("dense_cap", raw.get("dense_cap", DEFAULT_DENSE_CAP)),
        seed=overrides.pop("seed", raw.get("seed", 0)),
        raw=raw,
    )
    if cfg.is_example:
        cfg.example_params()  # fail early on gamma, M, N
    return cfg
