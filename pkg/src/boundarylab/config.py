"""Experiment configuration: parsing, validation, canonical hashing.

Configs are JSON objects with a version, an experiment kind, a model
block (built-in name or chart coefficients), an optional domain block,
a mandatory seed, and a numerics block whose schema depends on the kind.
Serialization is canonical (sorted keys, compact separators), and the
sha256 of the canonical form identifies a run in its manifest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import models
from .coefficients import coefficient_from_config
from .errors import ConfigError
from .fields import ChartModel, chart_model_from_config
from .geometry import DomainKind, DomainModel

EXPERIMENT_KINDS = ("classify", "halfcyl", "dirichlet-convergence",
                    "attraction", "martingale", "timescale")

CONFIG_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    output_dir: str
    model: ChartModel
    dom: DomainModel
    numerics: dict
    raw: dict

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def _expect(cond: bool, field: str, message: str):
    if not cond:
        raise ConfigError(field, message)


def _get_number(block: dict, field: str, key: str, *, default=None, positive=False,
                nonnegative=False):
    if key not in block:
        _expect(default is not None, f"{field}.{key}", "missing required value")
        return default
    v = block[key]
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool),
            f"{field}.{key}", f"expected number, got {v!r}")
    v = float(v)
    if positive:
        _expect(v > 0, f"{field}.{key}", f"must be > 0, got {v}")
    if nonnegative:
        _expect(v >= 0, f"{field}.{key}", f"must be >= 0, got {v}")
    return v


def _get_int(block: dict, field: str, key: str, *, default=None, minimum=None,
             power_of_two=False):
    if key not in block:
        _expect(default is not None, f"{field}.{key}", "missing required value")
        return default
    v = block[key]
    _expect(isinstance(v, int) and not isinstance(v, bool),
            f"{field}.{key}", f"expected integer, got {v!r}")
    if minimum is not None:
        _expect(v >= minimum, f"{field}.{key}", f"must be >= {minimum}, got {v}")
    if power_of_two:
        _expect(v & (v - 1) == 0, f"{field}.{key}", f"must be a power of two, got {v}")
    return v


def _parse_model(block, field: str = "model") -> ChartModel:
    _expect(isinstance(block, dict), field, "expected object")
    if "name" in block:
        _expect(set(block) == {"name"}, field, "model block takes either name or chart")
        name = block["name"]
        try:
            return models.get_model(name)
        except KeyError as exc:
            raise ConfigError(f"{field}.name", str(exc)) from exc
    if "chart" in block:
        return chart_model_from_config(block["chart"], f"{field}.chart")
    raise ConfigError(field, "needs a 'name' or a 'chart' block")


def _parse_domain(block, field: str = "domain") -> DomainModel:
    if block is None:
        return DomainModel()
    _expect(isinstance(block, dict), field, "expected object")
    kind = block.get("kind", "disk")
    _expect(kind in ("disk", "annulus"), f"{field}.kind", f"unknown kind {kind!r}")
    chart_radius = _get_number(block, field, "chart_radius", default=0.5, positive=True)
    inner = _get_number(block, field, "inner_radius", default=0.0, nonnegative=True)
    try:
        return DomainModel(kind=DomainKind(kind), inner_radius=inner,
                           chart_radius=chart_radius)
    except Exception as exc:
        raise ConfigError(field, str(exc)) from exc


def _parse_mc(block, field: str) -> dict:
    _expect(isinstance(block, dict), field, "expected object")
    out = {
        "dt": _get_number(block, field, "dt", positive=True),
        "n_paths": _get_int(block, field, "n_paths", minimum=1),
        "max_time": _get_number(block, field, "max_time", positive=True),
    }
    _expect(out["dt"] <= 1e-2, f"{field}.dt",
            f"must be <= 0.01 to resolve the height dynamics, got {out['dt']}")
    return out


def _coeff(block, field: str):
    try:
        return coefficient_from_config(block, field)
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(field, str(exc)) from exc


_KIND_VALIDATORS = {}


def _kind(name):
    def deco(fn):
        _KIND_VALIDATORS[name] = fn
        return fn
    return deco


@_kind("classify")
def _validate_classify(num: dict) -> dict:
    return {
        "grid_size": _get_int(num, "numerics", "grid_size", default=1024, minimum=16,
                              power_of_two=True),
        "tol": _get_number(num, "numerics", "tol", default=1e-8, positive=True),
    }


def _grid_block(num: dict) -> dict:
    g = num.get("grid", {})
    _expect(isinstance(g, dict), "numerics.grid", "expected object")
    out = {
        "n_y": _get_int(g, "numerics.grid", "n_y", default=64, minimum=32,
                        power_of_two=True),
        "n_z": _get_int(g, "numerics.grid", "n_z", default=640, minimum=100),
        "height": _get_number(g, "numerics.grid", "height", default=1.0e13),
        "stretching": g.get("stretching", "geometric"),
        "dz0": _get_number(g, "numerics.grid", "dz0", default=0.02, positive=True),
    }
    _expect(out["height"] >= 5.0, "numerics.grid.height", "must be >= 5")
    _expect(out["stretching"] in ("uniform", "geometric"),
            "numerics.grid.stretching", f"unknown value {out['stretching']!r}")
    return out


@_kind("halfcyl")
def _validate_halfcyl(num: dict) -> dict:
    _expect("data" in num, "numerics.data", "missing boundary data spec")
    return {
        "data": num["data"],
        "grid": _grid_block(num),
        "levels": num.get("levels", list(range(2, 22))),
    }


@_kind("dirichlet-convergence")
def _validate_convergence(num: dict) -> dict:
    eps_list = num.get("eps_list")
    _expect(isinstance(eps_list, list) and len(eps_list) >= 2,
            "numerics.eps_list", "expected a list of at least two eps values")
    for i, e in enumerate(eps_list):
        _expect(isinstance(e, (int, float)) and not isinstance(e, bool) and e > 0,
                f"numerics.eps_list[{i}]", f"must be a positive number, got {e!r}")
    _expect(all(b < a for a, b in zip(eps_list, eps_list[1:])),
            "numerics.eps_list", "must be strictly decreasing")
    probes = num.get("probes")
    _expect(isinstance(probes, list) and probes, "numerics.probes",
            "expected a non-empty list of [x1, x2] points")
    for i, p in enumerate(probes):
        _expect(isinstance(p, list) and len(p) == 2, f"numerics.probes[{i}]",
                "expected [x1, x2]")
    _expect("data" in num, "numerics.data", "missing boundary data spec")
    out = {
        "eps_list": [float(e) for e in eps_list],
        "probes": [tuple(map(float, p)) for p in probes],
        "data": num["data"],
        "threshold": _get_number(num, "numerics", "threshold", default=0.05,
                                 positive=True),
        "n_theta": _get_int(num, "numerics", "n_theta", default=64, minimum=32,
                            power_of_two=True),
        "grid": _grid_block(num),
        "both_completions": bool(num.get("both_completions", False)),
    }
    if "mc" in num:
        out["mc"] = _parse_mc(num["mc"], "numerics.mc")
    return out


@_kind("attraction")
def _validate_attraction(num: dict) -> dict:
    starts = num.get("starts")
    _expect(isinstance(starts, list) and starts, "numerics.starts",
            "expected a non-empty list of [y, z] starts")
    for i, s in enumerate(starts):
        _expect(isinstance(s, list) and len(s) == 2, f"numerics.starts[{i}]",
                "expected [y, z]")
    return {
        "starts": [tuple(map(float, s)) for s in starts],
        "horizon": _get_number(num, "numerics", "horizon", positive=True),
        "near": _get_number(num, "numerics", "near", default=0.01, positive=True),
        "far_wall": _get_number(num, "numerics", "far_wall", default=50.0,
                                positive=True),
        "mc": _parse_mc(num.get("mc"), "numerics.mc"),
    }


@_kind("martingale")
def _validate_martingale(num: dict) -> dict:
    band = num.get("band")
    _expect(isinstance(band, list) and len(band) == 2, "numerics.band",
            "expected [lo, hi]")
    lo, hi = float(band[0]), float(band[1])
    _expect(0 < lo < hi, "numerics.band", "must satisfy 0 < lo < hi")
    start = num.get("start")
    _expect(isinstance(start, list) and len(start) == 2, "numerics.start",
            "expected [y, zz]")
    cps = num.get("checkpoints")
    _expect(isinstance(cps, list) and len(cps) >= 2, "numerics.checkpoints",
            "expected a list of at least two times")
    return {
        "band": (lo, hi),
        "start": tuple(map(float, start)),
        "checkpoints": [float(t) for t in cps],
        "mc": _parse_mc(num.get("mc"), "numerics.mc"),
    }


@_kind("timescale")
def _validate_timescale(num: dict) -> dict:
    eps_list = num.get("eps_list")
    _expect(isinstance(eps_list, list) and eps_list, "numerics.eps_list",
            "expected a non-empty list")
    for i, e in enumerate(eps_list):
        _expect(isinstance(e, (int, float)) and not isinstance(e, bool) and e > 0,
                f"numerics.eps_list[{i}]", f"must be a positive number, got {e!r}")
    rules = num.get("rules")
    _expect(isinstance(rules, list) and rules, "numerics.rules",
            "expected a non-empty list of rules")
    parsed_rules = []
    for i, r in enumerate(rules):
        _expect(isinstance(r, dict), f"numerics.rules[{i}]", "expected object")
        kind = r.get("kind")
        _expect(kind in ("const", "log", "power"), f"numerics.rules[{i}].kind",
                f"unknown kind {kind!r}")
        parsed_rules.append({
            "name": r.get("name", f"rule{i}"),
            "kind": kind,
            "c": _get_number(r, f"numerics.rules[{i}]", "c", positive=True),
            "p": _get_number(r, f"numerics.rules[{i}]", "p", default=1.0,
                             positive=True),
        })
    start = num.get("start", [0.0, 0.0])
    _expect(isinstance(start, list) and len(start) == 2, "numerics.start",
            "expected [x1, x2]")
    _expect("data" in num, "numerics.data", "missing boundary data spec")
    g_block = num.get("g", 0.0)
    return {
        "eps_list": [float(e) for e in eps_list],
        "rules": parsed_rules,
        "start": tuple(map(float, start)),
        "data": num["data"],
        "g": g_block,
        "mc": _parse_mc(num.get("mc"), "numerics.mc"),
    }


def parse_config(obj) -> ExperimentConfig:
    """Validate a config dict (or JSON file path / string) into a typed config."""
    if isinstance(obj, str):
        try:
            with open(obj, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from exc
    _expect(isinstance(obj, dict), "<root>", "config must be a JSON object")
    version = obj.get("version")
    _expect(version == CONFIG_VERSION, "version",
            f"expected {CONFIG_VERSION}, got {version!r}")
    experiment = obj.get("experiment")
    _expect(experiment in EXPERIMENT_KINDS, "experiment",
            f"unknown experiment {experiment!r}; one of {EXPERIMENT_KINDS}")
    seed = obj.get("seed")
    _expect(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0,
            "seed", "a non-negative integer seed is mandatory (no wall-clock seeding)")
    output_dir = obj.get("output_dir", experiment)
    _expect(isinstance(output_dir, str) and output_dir, "output_dir",
            "expected non-empty string")
    model = _parse_model(obj.get("model"))
    dom = _parse_domain(obj.get("domain"))
    numerics = obj.get("numerics", {})
    _expect(isinstance(numerics, dict), "numerics", "expected object")
    validated = _KIND_VALIDATORS[experiment](numerics)
    known = {"version", "experiment", "seed", "output_dir", "model", "domain",
             "numerics"}
    extra = sorted(set(obj) - known)
    if extra:
        raise ConfigError(extra[0], "unknown top-level key")
    return ExperimentConfig(experiment=experiment, seed=seed, output_dir=output_dir,
                            model=model, dom=dom, numerics=validated, raw=obj)


def boundary_data_fn(spec, field: str = "numerics.data"):
    """Boundary data as a callable of the angle, from a coefficient spec."""
    return _coeff(spec, field)


def initial_data_fn(spec, field: str = "numerics.g"):
    """Initial data on the domain from a config spec (constants only)."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        c = float(spec)
        return lambda x: np.full(len(x), c)
    if isinstance(spec, dict) and spec.get("kind") == "const":
        c = _get_number(spec, field, "c")
        return lambda x: np.full(len(x), c)
    raise ConfigError(field, "initial data supports constants only")
