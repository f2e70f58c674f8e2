"""Scenario configuration: JSON schema, validation and object construction."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .geometry import family_from_dict
from .objective import Objective, ObjectiveSpec
from .optimizer import OptimizerConfig
from .pipeline import DEFAULT_PILLBOX_MODES, DiscretePipeline, PillboxPipeline
from .tracking import Tracker

_NUMBER_PAIR = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_NET = {
    "type": "object",
    "required": ["degree", "knots", "points", "weights"],
    "additionalProperties": False,
    "properties": {
        "degree": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "knots": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "points": {"type": "array", "items": _NUMBER_PAIR},
        "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["name", "geometry", "objective", "optimizer", "tracking"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "geometry": {
            "type": "object",
            "required": ["kind", "bounds"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["scaled-rectangle", "explicit-control-path", "multi-cell-chain", "pillbox-analytic"]},
                "bounds": {"type": "array", "items": _NUMBER_PAIR, "minItems": 1},
                "cells": {"type": "array", "items": _NUMBER_PAIR},
                "base_net": _NET,
                "paths": {"type": "array"},
                "chain": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "n_cells": {"type": "integer", "minimum": 2},
                        "cell_length": {"type": "number", "exclusiveMinimum": 0},
                        "iris_half_height": {"type": "number", "exclusiveMinimum": 0},
                        "bump_weight": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                "length": {"type": "number", "exclusiveMinimum": 0},
                "modes": {"type": "array", "items": {"type": "string", "pattern": "^(TM|TE)[0-9]{3}$"}, "minItems": 1},
            },
        },
        "discretization": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["scalar", "curl"]},
                "degree": {"type": "integer", "minimum": 1, "maximum": 6},
                "refinement": {"type": "integer", "minimum": 0, "maximum": 6},
                "subdivisions": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
                "velocity_step": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "samples_per_cell": {"type": "integer", "minimum": 1},
            },
        },
        "eigen": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n_modes": {"type": "integer", "minimum": 1}},
        },
        "tracking": {
            "type": "object",
            "required": ["mode"],
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "mode": {"type": "integer", "minimum": 1},
                "floor": {"type": "number", "minimum": 0, "maximum": 1},
            },
        },
        "objective": {
            "type": "object",
            "required": ["variant"],
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["squared-error-lambda", "squared-error-f-penalty", "flatness-combined"]},
                "lambda_ref": {"type": "number", "exclusiveMinimum": 0},
                "f_ref": {"type": "number", "exclusiveMinimum": 0},
                "s": {"type": "number", "minimum": 0},
                "alpha": {"type": "number", "minimum": 0},
                "beta": {"type": "number", "minimum": 0},
                "p_ref": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
            },
        },
        "optimizer": {
            "type": "object",
            "required": ["p0"],
            "additionalProperties": False,
            "properties": {
                "p0": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}, "minItems": 1},
                "gradient": {"enum": ["closed-form", "fd"]},
                "max_iterations": {"type": "integer", "minimum": 0},
                "g_tol": {"type": "number", "exclusiveMinimum": 0},
                "step_tol": {"type": "number", "exclusiveMinimum": 0},
                "initial_step": {"type": "number", "exclusiveMinimum": 0},
                "armijo": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "backtrack": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "fd_step": {"type": "number", "exclusiveMinimum": 0},
                "flatness_step": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "param": {"type": "integer", "minimum": 0},
                "samples": {"type": "integer", "minimum": 1},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid scenario configuration; ``pointer`` locates the offending value."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__("%s: %s" % (pointer or "/", message))
        self.pointer = pointer


def _pointer(path) -> str:
    return "".join("/" + str(part).replace("~", "~0").replace("/", "~1") for part in path)


def validate(data: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _pointer(err.absolute_path))


def scenario_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("cavopt.scenarios").iterdir() if p.name.endswith(".json"))


def read_config(source) -> dict:
    """Load a config from a path, or from a shipped scenario name."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
    else:
        candidate = resources.files("cavopt.scenarios").joinpath("%s.json" % source)
        if not candidate.is_file():
            raise ConfigError("no config file or shipped scenario named %r" % str(source))
        text = candidate.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("invalid JSON (%s)" % exc) from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    validate(data)
    return data


def config_hash(data: dict) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


@dataclass
class Scenario:
    """Objects built from a validated config."""

    data: dict
    pipeline: object
    spec: ObjectiveSpec
    optimizer: OptimizerConfig
    tracking: bool
    mode_index: int
    floor: float
    flatness_step: float

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def p0(self) -> np.ndarray:
        return np.asarray(self.data["optimizer"]["p0"], dtype=float)

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def tracker(self) -> Tracker:
        return Tracker(self.mode_index, self.tracking, self.floor)

    def make_objective(self) -> Objective:
        """Fresh objective with its own tracker and call counters."""
        return Objective(self.spec, self.pipeline, self.tracker(), self.optimizer.fd_step, self.flatness_step)


def _build_pipeline(data: dict):
    geo = dict(data["geometry"])
    eig = data.get("eigen", {})
    if geo["kind"] == "pillbox-analytic":
        extra = set(geo) - {"kind", "bounds", "length", "modes"}
        if extra:
            raise ConfigError("not used by pillbox-analytic", "/geometry/" + sorted(extra)[0])
        if "discretization" in data:
            raise ConfigError("pillbox-analytic has no discretization", "/discretization")
        return PillboxPipeline(geo["bounds"], geo.get("length", 0.1), geo.get("modes", DEFAULT_PILLBOX_MODES))
    if "discretization" not in data:
        raise ConfigError("discrete geometry needs a discretization block", "/discretization")
    if geo["kind"] != "multi-cell-chain" and ("length" in geo or "modes" in geo):
        raise ConfigError("only pillbox-analytic takes length/modes", "/geometry")
    try:
        family = family_from_dict(geo)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc), "/geometry") from exc
    disc = data["discretization"]
    return DiscretePipeline(
        family,
        kind=disc.get("kind", "scalar"),
        degree=disc.get("degree", 2),
        refinement=disc.get("refinement", 0),
        subdivisions=disc.get("subdivisions"),
        n_wanted=eig.get("n_modes", 8),
        velocity_step=disc.get("velocity_step"),
        samples_per_cell=disc.get("samples_per_cell", 64),
    )


def build(data: dict, gradient: str | None = None, tracking: bool | None = None) -> Scenario:
    """Construct pipeline, objective and optimizer settings from a validated config."""
    validate(data)
    try:
        pipeline = _build_pipeline(data)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), "/geometry") from exc
    n = pipeline.n_params
    opt = dict(data["optimizer"])
    if len(opt["p0"]) != n:
        raise ConfigError("expected %d entries" % n, "/optimizer/p0")
    obj = dict(data["objective"])
    if "p_ref" in obj and len(obj["p_ref"]) != n:
        raise ConfigError("expected %d entries" % n, "/objective/p_ref")
    mode = gradient or opt.get("gradient", "closed-form")
    try:
        spec = ObjectiveSpec(
            variant=obj["variant"], lambda_ref=obj.get("lambda_ref"), f_ref=obj.get("f_ref"),
            s=obj.get("s", 0.0), alpha=obj.get("alpha", 0.0), beta=obj.get("beta", 0.0),
            p_ref=tuple(obj["p_ref"]) if "p_ref" in obj else None, gradient=mode)
    except ValueError as exc:
        raise ConfigError(str(exc), "/objective") from exc
    if spec.variant == "flatness-combined" and pipeline.analytic:
        raise ConfigError("flatness needs a discrete geometry", "/objective/variant")
    keys = ("max_iterations", "g_tol", "step_tol", "initial_step", "armijo", "backtrack", "fd_step")
    cfg = OptimizerConfig(gradient=mode, **{k: opt[k] for k in keys if k in opt})
    trk = data["tracking"]
    index = trk["mode"] - 1
    if index >= pipeline.n_wanted:
        raise ConfigError("mode %d exceeds the %d computed modes" % (trk["mode"], pipeline.n_wanted), "/tracking/mode")
    enabled = trk.get("enabled", True) if tracking is None else tracking
    sweep = data.get("sweep", {})
    if sweep.get("param", 0) >= n:
        raise ConfigError("parameter index out of range", "/sweep/param")
    return Scenario(data, pipeline, spec, cfg, enabled, index, trk.get("floor", 0.5), opt.get("flatness_step", 1e-3))


def load(source, gradient: str | None = None, tracking: bool | None = None) -> Scenario:
    return build(read_config(source), gradient, tracking)
