"""Experiment configuration: JSON schema, defaults and cell expansion."""

from __future__ import annotations

import copy
import itertools
import json
from pathlib import Path

import jsonschema

from ..optimize import OPTIMIZERS, OUT_OF_SCOPE

_INSTANCE = {
    "type": "object",
    "oneOf": [
        {
            "properties": {"path": {"type": "string"}},
            "required": ["path"],
        },
        {
            "properties": {
                "generator": {"const": "random"},
                "n": {"type": "integer", "minimum": 3},
                "seed": {"type": "integer", "minimum": 0},
                "low": {"type": "number", "exclusiveMinimum": 0},
                "high": {"type": "number", "exclusiveMinimum": 0},
                "euclidean": {"type": "boolean"},
            },
            "required": ["generator", "n"],
        },
        {
            "properties": {
                "generator": {"const": "blue-route"},
                "n": {"type": "integer", "minimum": 3, "maximum": 6},
            },
            "required": ["generator", "n"],
        },
    ],
}

_PENALTY = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "auto"}]}
_SCALING = {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"enum": ["gap", "width"]}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["instance", "algorithm", "optimizer"],
    "properties": {
        "instance": {"oneOf": [_INSTANCE, {"type": "array", "items": _INSTANCE, "minItems": 1}]},
        "algorithm": {
            "type": "object",
            "additionalProperties": False,
            "required": ["ansatz"],
            "properties": {
                "ansatz": {"enum": ["qaoa", "ws_qaoa", "aoa", "hevqe", "rqaoa"]},
                "depth": {"type": "integer", "minimum": 0},
                "init": {"enum": ["random", "linear", "near-zero"]},
                "init_scale": {"type": "number", "exclusiveMinimum": 0},
                "tour": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "stop_dim": {"type": "integer", "minimum": 1},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": list(OPTIMIZERS)},
                "max_evals": {"type": "integer", "minimum": 1},
                "target_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_stall": {"type": "integer", "minimum": 1},
            },
        },
        "penalty": _PENALTY,
        "scaling": _SCALING,
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "penalty": {"type": "array", "items": _PENALTY, "minItems": 1},
                "scaling": {"type": "array", "items": _SCALING, "minItems": 1},
                "depth": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "optimizer": {"type": "array", "items": {"enum": list(OPTIMIZERS)}, "minItems": 1},
            },
        },
        "repeats": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "shots": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
    },
}

DEFAULTS = {
    "penalty": 100.0,
    "scaling": 1.0,
    "repeats": 1,
    "seed": 0,
    "shots": 0,
    "output": "runs.csv",
}

ALGORITHM_DEFAULTS = {"depth": None, "init": None, "init_scale": 0.3, "stop_dim": 4}
OPTIMIZER_DEFAULTS = {"max_evals": 10000, "target_tol": 1e-8, "max_stall": 200}


class ConfigError(ValueError):
    pass


def validate(doc: dict) -> dict:
    """Check ``doc`` against the schema and fill in defaults."""
    names = [doc.get("optimizer", {}).get("name")] if isinstance(doc, dict) else []
    names += (doc.get("sweep") or {}).get("optimizer", []) if isinstance(doc, dict) else []
    for name in names:
        if isinstance(name, str) and name.lower() in OUT_OF_SCOPE:
            raise ConfigError(
                f"optimizer {name!r} is not implemented (out of scope: {', '.join(OUT_OF_SCOPE)}); "
                f"available: {', '.join(OPTIMIZERS)}"
            )
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    cfg = copy.deepcopy(doc)
    for k, v in DEFAULTS.items():
        cfg.setdefault(k, v)
    alg = cfg["algorithm"]
    for k, v in ALGORITHM_DEFAULTS.items():
        alg.setdefault(k, v)
    if alg["depth"] is None:
        alg["depth"] = 1 if alg["ansatz"] == "hevqe" else 5
    if alg["init"] is None:
        alg["init"] = "near-zero" if alg["ansatz"] == "hevqe" else "random"
    if alg["init"] == "linear" and alg["ansatz"] in ("hevqe", "rqaoa"):
        raise ConfigError("linear initialisation applies to alternating ansätze only")
    for k, v in OPTIMIZER_DEFAULTS.items():
        cfg["optimizer"].setdefault(k, v)
    if not isinstance(cfg["instance"], list):
        cfg["instance"] = [cfg["instance"]]
    return cfg


def load_config(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return validate(doc)


def expand_cells(cfg: dict) -> list[dict]:
    """Cartesian product of instances and sweep values, in a fixed order."""
    sweep = cfg.get("sweep", {})
    axes = {
        "penalty": sweep.get("penalty", [cfg["penalty"]]),
        "scaling": sweep.get("scaling", [cfg["scaling"]]),
        "depth": sweep.get("depth", [cfg["algorithm"]["depth"]]),
        "optimizer": sweep.get("optimizer", [cfg["optimizer"]["name"]]),
    }
    cells = []
    for inst, pen, sc, depth, opt in itertools.product(cfg["instance"], *axes.values()):
        cells.append({
            "instance": inst,
            "penalty": pen,
            "scaling": sc,
            "depth": depth,
            "optimizer": opt,
        })
    return cells
