"""Experiment configuration: defaults, JSON-schema validation, assembly.

A single JSON document configures every experiment.  Unknown keys are
rejected and violations are reported with the JSON path of the offending
value.  Command-line flags override file values, which override the
built-in defaults below.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import jsonschema

from .geometry import Rect
from .kernels import Hyperparams
from .mapping import MergeConfig
from .ndtree import TreeConfig
from .planning import PlannerConfig
from .sensor import SensorConfig

DEFAULTS: dict = {
    "extent_m": 20.0,
    "resolution_m": 0.1,
    "tree": {"N": 2, "leaves_per_axis": 32},
    "kernel": {"sigma2": 0.25, "length_scale": 2.36},
    "prior_mean": 0.5,
    "sensor": {
        "alpha": 0.004,
        "beta": 0.1,
        "footprint_coeff": 2.0,
        "sample_noise": True,
    },
    "merge": {"gamma": 2.0, "f_th": 0.7, "confidence_term": "stddev"},
    "planner": {
        "budget_s": 100.0,
        "speed_mps": 2.0,
        "altitudes": [2.0, 8.0],
        "start": [0.0, 20.0, 8.0],
    },
    "seeds": 0,
    "method": "argp",
}

_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "extent_m": _POS,
        "resolution_m": _POS,
        "tree": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 2},
                "depth_t": {"type": "integer", "minimum": 1},
                "leaves_per_axis": {"type": "integer", "minimum": 2},
            },
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"sigma2": _POS, "length_scale": _POS},
        },
        "prior_mean": {"type": "number"},
        "sensor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": _NONNEG,
                "beta": _NONNEG,
                "footprint_coeff": _POS,
                "sample_noise": {"type": "boolean"},
            },
        },
        "merge": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "gamma": _NONNEG,
                "f_th": {"type": "number"},
                "confidence_term": {"enum": ["variance", "stddev"]},
            },
        },
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "budget_s": _POS,
                "speed_mps": _POS,
                "altitudes": {
                    "type": "array",
                    "items": _POS,
                    "minItems": 1,
                },
                "start": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 3,
                    "maxItems": 3,
                },
            },
        },
        "seeds": {"type": "integer", "minimum": 0},
        "method": {"enum": ["argp", "fr", "gpr", "indep"]},
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``json_path`` locates the violation."""

    def __init__(self, message: str, json_path: str = "$"):
        super().__init__(message)
        self.json_path = json_path


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: e.json_path)
    if errors:
        err = errors[0]
        raise ConfigError(err.message, err.json_path)
    tree = cfg.get("tree", {})
    if "depth_t" in tree and "leaves_per_axis" in tree:
        n, t = tree["N"], tree["depth_t"]
        if n ** t != tree["leaves_per_axis"]:
            raise ConfigError(
                f"leaves_per_axis {tree['leaves_per_axis']} contradicts N^depth_t = {n ** t}",
                "$.tree.leaves_per_axis",
            )


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    # the two tree-resolution forms are alternatives: whichever one a source
    # sets explicitly displaces the inherited other
    tree = override.get("tree")
    if isinstance(tree, dict) and isinstance(out.get("tree"), dict):
        if "depth_t" in tree and "leaves_per_axis" not in tree:
            out["tree"].pop("leaves_per_axis", None)
        elif "leaves_per_axis" in tree and "depth_t" not in tree:
            out["tree"].pop("depth_t", None)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, optionally overlaid with a JSON file and explicit overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path) as handle:
            try:
                user = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        cfg = _deep_merge(cfg, user)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    validate_config(cfg)
    return cfg


@dataclass(frozen=True)
class Experiment:
    """Typed view of a validated configuration."""

    extent: Rect
    resolution: float
    tree: TreeConfig
    hyper: Hyperparams
    prior_mean: float
    sensor: SensorConfig
    merge: MergeConfig
    planner: PlannerConfig
    seed: int
    method: str


def build_experiment(cfg: dict) -> Experiment:
    side = float(cfg["extent_m"])
    extent = Rect(0.0, side, 0.0, side)
    tree_cfg = cfg["tree"]
    branching = int(tree_cfg.get("N", 2))
    if "depth_t" in tree_cfg:
        tree = TreeConfig(branching=branching, max_depth=int(tree_cfg["depth_t"]),
                          extent=extent)
        if "leaves_per_axis" in tree_cfg and tree.leaves_per_axis != tree_cfg["leaves_per_axis"]:
            raise ConfigError("tree depth and leaves_per_axis disagree", "$.tree")
    else:
        try:
            tree = TreeConfig.for_leaves_per_axis(
                extent, int(tree_cfg.get("leaves_per_axis", 32)), branching
            )
        except ValueError as exc:
            raise ConfigError(str(exc), "$.tree.leaves_per_axis") from None
    return Experiment(
        extent=extent,
        resolution=float(cfg["resolution_m"]),
        tree=tree,
        hyper=Hyperparams(float(cfg["kernel"]["sigma2"]), float(cfg["kernel"]["length_scale"])),
        prior_mean=float(cfg["prior_mean"]),
        sensor=SensorConfig(
            alpha=float(cfg["sensor"]["alpha"]),
            beta=float(cfg["sensor"]["beta"]),
            footprint_coeff=float(cfg["sensor"]["footprint_coeff"]),
            sample_noise=bool(cfg["sensor"]["sample_noise"]),
        ),
        merge=MergeConfig(
            gamma=float(cfg["merge"]["gamma"]),
            f_th=float(cfg["merge"]["f_th"]),
            confidence_term=cfg["merge"]["confidence_term"],
        ),
        planner=PlannerConfig(
            budget_s=float(cfg["planner"]["budget_s"]),
            speed_mps=float(cfg["planner"]["speed_mps"]),
            altitudes=tuple(float(a) for a in cfg["planner"]["altitudes"]),
            start=tuple(float(v) for v in cfg["planner"]["start"]),
        ),
        seed=int(cfg["seeds"]),
        method=cfg["method"],
    )
