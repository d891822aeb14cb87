"""Run configuration: JSON schema, validation and dataset resolution."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .dataset import DataSet, load_dataset, make_blobs
from .seeds import derive_seed

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_nonneg = {"type": "number", "minimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gae run config",
    "type": "object",
    "additionalProperties": False,
    "required": ["dataset"],
    "properties": {
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "format": {"enum": ["csv", "image-folder", "idx"]},
                "labels_path": {"type": ["string", "null"]},
                "has_labels": {"type": ["boolean", "null"]},
                "synthetic": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["class_count", "per_class", "dim", "spread"],
                    "properties": {
                        "class_count": _pos_int,
                        "per_class": _pos_int,
                        "dim": _pos_int,
                        "spread": _nonneg,
                    },
                },
            },
            "oneOf": [{"required": ["path"]}, {"required": ["synthetic"]}],
        },
        "method": {"enum": ["gae", "sgae", "sae", "plain_ae", "graph_only"]},
        "methods": {
            "type": "array",
            "minItems": 1,
            "items": {"enum": ["gae", "sgae", "sae", "plain_ae", "pca", "kmeans_raw"]},
        },
        "graph": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["knn", "epsilon", "l1", "semi"]},
                "k": _pos_int,
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "lambda1": _nonneg,
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": _pos_int,
            },
        },
        "dims": {"type": "array", "minItems": 1, "items": _pos_int},
        "lam": {"oneOf": [_nonneg, {"type": "array", "items": _nonneg, "minItems": 1}]},
        "eta": _nonneg,
        "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iter": _pos_int,
                "grad_tol": {"type": "number", "exclusiveMinimum": 0},
                "history_size": _pos_int,
            },
        },
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "class_subset_sizes": {"type": "array", "minItems": 1, "items": _pos_int},
                "repeats": _pos_int,
                "labeled_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "depth": {"enum": [1, 2]},
                "hidden": {"type": ["integer", "null"], "minimum": 1},
                "restarts": _pos_int,
            },
        },
        "hyper_grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                key: {"type": "array", "minItems": 1, "items": _num}
                for key in ("lam", "k", "eta", "rho")
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
        "seed": {"type": "integer"},
        "jobs": _pos_int,
    },
}

DEFAULTS = {
    "method": "gae",
    "methods": ["gae", "plain_ae", "pca", "kmeans_raw"],
    "graph": {"kind": "knn", "k": 5},
    "lam": 0.1,
    "eta": 0.01,
    "rho": 0.05,
    "optimizer": {"max_iter": 400, "grad_tol": 1e-5, "history_size": 10},
    "protocol": {"repeats": 5, "depth": 2, "hidden": None, "restarts": 10},
    "output": {"dir": "out"},
    "seed": 0,
    "jobs": 1,
}


class ConfigError(ValueError):
    pass


def _merge(base, over):
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def read_config(path) -> dict:
    """Load a config file; a run manifest is accepted and its stored config used."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if isinstance(raw, dict) and "config" in raw and "command" in raw:
        raw = raw["config"]
    return raw


def resolve(raw: dict, overrides: dict | None = None) -> dict:
    """Validate ``raw`` against the schema and fill in defaults."""
    cfg = _merge(raw, {k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    cfg = _merge(DEFAULTS, cfg)
    data = cfg["dataset"]
    for key in ("path", "labels_path"):
        if data.get(key) and not Path(data[key]).exists():
            raise ConfigError(f"dataset {key} {data[key]!r} does not exist")
    if isinstance(cfg["lam"], list) and "dims" in cfg and len(cfg["lam"]) != len(cfg["dims"]):
        raise ConfigError("per-layer lam list must have one entry per layer in dims")
    g = cfg["graph"]
    need = {"knn": "k", "semi": "k", "epsilon": "epsilon", "l1": "lambda1"}[g["kind"]]
    if need not in g:
        raise ConfigError(f"graph kind {g['kind']!r} needs parameter {need!r}")
    return cfg


def build_dataset(cfg: dict) -> DataSet:
    data = cfg["dataset"]
    if "synthetic" in data:
        s = data["synthetic"]
        return make_blobs(s["class_count"], s["per_class"], s["dim"], s["spread"],
                          derive_seed(cfg["seed"], "dataset"))
    return load_dataset(data["path"], data.get("format", "csv"), data.get("labels_path"),
                        data.get("has_labels"))
