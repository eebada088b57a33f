"""JSON experiment configuration: schema, loading and validation."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_coord = {"oneOf": [_pos_int, {"type": "array", "items": _pos_int, "minItems": 2, "maxItems": 2}]}
_local = {"oneOf": [
    {"type": "string", "enum": ["0", "1", "+", "-", "+i", "-i"]},
    {"type": "array", "items": {"type": "array", "items": {"type": "array", "items": _num}}},
]}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "clusterbell experiment",
    "type": "object",
    "additionalProperties": False,
    "required": ["lattice"],
    "properties": {
        "lattice": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind", "L"],
            "properties": {
                "kind": {"enum": ["chain", "grid"]},
                "L": {"oneOf": [_pos_int, {"type": "array", "items": _pos_int,
                                           "minItems": 2, "maxItems": 2}]},
            },
        },
        "hamiltonian": {
            "type": "object",
            "additionalProperties": False,
            "required": ["family"],
            "properties": {
                "family": {"enum": ["xy_chain", "grid"]},
                "gamma": _num,
                "k": _pos_int,
                "coupling": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "fields": {"oneOf": [_num, {"type": "array", "items": _num}]},
            },
        },
        "state": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["ground", "gibbs", "evolved", "ghz", "product"]},
                "beta": {"type": "number", "minimum": 0},
                "t": _num,
                "initial": {"oneOf": [
                    {"type": "string", "enum": ["0", "1", "+", "-", "+i", "-i"]},
                    {"type": "array", "items": {"type": "string"}},
                ]},
                "locals": {"type": "array", "items": _local},
            },
        },
        "regions": {"type": "array", "items": {"type": "array", "items": _coord, "minItems": 1}},
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau_list": {"type": "array", "items": _pos_int, "minItems": 1},
                "t_list": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "parties": {"type": "integer", "minimum": 2},
                "region_size": _pos_int,
                "partitions": {"oneOf": [
                    {"const": "all"},
                    {"type": "array", "items": {"type": "string", "pattern": r"^(seq|[0-9+]+\|[0-9+]+)$"}},
                ]},
            },
        },
        "inequality": {
            "type": "object",
            "required": ["name"],
            "properties": {
                "name": {"enum": ["svetlichny3", "svetlichny4", "seevinck_svetlichny", "custom"]},
                "n": {"type": "integer", "minimum": 1},
                "sign": {"enum": ["+", "-", 1, -1]},
                "inputs": {"oneOf": [_pos_int, {"type": "array", "items": _pos_int}]},
                "terms": {"type": "array", "items": {
                    "type": "object",
                    "required": ["parties", "inputs", "coeff"],
                    "properties": {
                        "parties": {"type": "array", "items": _pos_int, "minItems": 1},
                        "inputs": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                        "coeff": _num,
                    },
                }},
                "delta_loc": {"type": ["number", "null"]},
            },
            "allOf": [{"if": {"required": ["name"], "properties": {"name": {"const": "custom"}}},
                       "then": {"required": ["n", "terms"]}}],
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "restarts": _pos_int,
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": _pos_int,
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "certify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau": _pos_int,
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "constants": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["c", "kappa"],
                    "properties": {"c": {"type": "number", "minimum": 0}, "kappa": _num, "v": _num},
                },
            },
        },
        "spectrum": {"enum": ["full", "head", "none"]},
        "output": {
            "type": "object",
            "additionalProperties": {"type": "string"},
        },
    },
}


def _path(err: jsonschema.ValidationError) -> str:
    parts = ["$"] + [f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path]
    return "".join(parts)


def validate(config) -> dict:
    """Raise :class:`ConfigError` listing every schema violation with its field path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = [f"{_path(e)}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    return config


def load_config(path: str | Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: line {exc.lineno} col {exc.colno}: {exc.msg}") from None
    return validate(config)


def canonical(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def run_id(config: dict) -> str:
    return hashlib.sha256(canonical(config).encode()).hexdigest()[:12]
