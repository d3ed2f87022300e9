"""Run configuration: JSON schemas, validation, and the RunConfig container.

Every command validates its configuration against a published schema before
any compute starts.  Unknown keys are rejected everywhere so that a typo in
an option name fails loudly instead of silently running defaults.
"""

import json
from dataclasses import dataclass, field

import jsonschema

from .errors import ConfigError

SCHEMA_VERSION = 1

_NUMBER = {"type": "number"}
_POS_NUMBER = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}

# the distortion block is checked for shape here and for family-specific
# keys by distortion_from_dict, which knows the parameter ranges
_DISTORTION = {
    "type": "object",
    "properties": {
        "family": {"type": "string"},
        "gamma": _NUMBER,
        "alpha": _NUMBER,
        "time_weight": {
            "type": "object",
            "properties": {
                "kind": {"type": "string"},
                "rate": _NUMBER,
                "anchor": _NUMBER,
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "base": {"$ref": "#/$defs/distortion"},
    },
    "required": ["family"],
    "additionalProperties": False,
}

_MODEL = {
    "type": "object",
    "properties": {"b": _NUMBER, "x0": _NUMBER, "T": _POS_NUMBER},
    "required": ["b", "T"],
    "additionalProperties": False,
}

TREE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"distortion": _DISTORTION},
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "distortion": {"$ref": "#/$defs/distortion"},
        "tree": {
            "oneOf": [
                {
                    "type": "object",
                    "properties": {
                        "N": _POS_INT,
                        "T": _POS_NUMBER,
                        "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                        "x0": _NUMBER,
                        "step": _POS_NUMBER,
                    },
                    "required": ["N", "T"],
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "properties": {"file": {"type": "string"}},
                    "required": ["file"],
                    "additionalProperties": False,
                },
            ]
        },
        "payload": {"type": "array", "items": _NUMBER, "minItems": 2},
        "compare_naive": {"type": "boolean"},
        "crossing_check": {"type": "boolean"},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["schema_version", "distortion", "tree"],
    "additionalProperties": False,
}

DYNAMICS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"distortion": _DISTORTION},
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "distortion": {"$ref": "#/$defs/distortion"},
        "model": _MODEL,
        "mu_grid": {
            "type": "object",
            "properties": {
                "t_min": _POS_NUMBER,
                "t_max": _POS_NUMBER,
                "nt": _POS_INT,
                "x_half": _POS_NUMBER,
                "nx": _POS_INT,
            },
            "additionalProperties": False,
        },
        "phi": {
            "type": "object",
            "properties": {
                "s": _POS_NUMBER,
                "t": _POS_NUMBER,
                "x": _NUMBER,
                "n_points": _POS_INT,
            },
            "required": ["s", "t"],
            "additionalProperties": False,
        },
        "value": {
            "type": "object",
            "properties": {
                "s_min": _POS_NUMBER,
                "payload_center": _NUMBER,
                "payload_width": _POS_NUMBER,
            },
            "additionalProperties": False,
        },
        "mc": {
            "type": "object",
            "properties": {
                "paths": _POS_INT,
                "steps": _POS_INT,
                "probes": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": _NUMBER,
                        "minItems": 2,
                        "maxItems": 2,
                    },
                    "minItems": 1,
                },
            },
            "additionalProperties": False,
        },
        "convergence": {
            "type": "object",
            "properties": {
                "N_list": {"type": "array", "items": _POS_INT, "minItems": 1},
                "eval_t": _POS_NUMBER,
                "eval_x": _NUMBER,
            },
            "required": ["N_list", "eval_t", "eval_x"],
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["schema_version", "distortion", "model"],
    "additionalProperties": False,
}

DENSITY_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": _MODEL,
        "grids": {
            "type": "object",
            "properties": {"nt": _POS_INT, "nx": _POS_INT, "width": _POS_NUMBER},
            "additionalProperties": False,
        },
        "bridge": {
            "type": "object",
            "properties": {
                "t": {"type": "array", "items": _POS_NUMBER, "minItems": 1},
                "x": {"type": "array", "items": _NUMBER, "minItems": 1},
                "paths": _POS_INT,
                "steps": _POS_INT,
            },
            "required": ["t", "x"],
            "additionalProperties": False,
        },
        "compare": {"type": "boolean"},
        "format": {"enum": ["csv", "binary"]},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["schema_version", "model"],
    "additionalProperties": False,
}

SCHEMAS = {"tree": TREE_SCHEMA, "dynamics": DYNAMICS_SCHEMA, "density": DENSITY_SCHEMA}


@dataclass
class RunConfig:
    """A validated configuration for one command invocation."""

    command: str
    params: dict
    seed: int = 0
    out: str = ""
    threads: int = 0
    strict_mon2: bool = False
    source: str = field(default="", compare=False)

    def echo(self):
        """The exact dict that was validated; re-validates by construction."""
        return self.params


def validate_params(command, obj):
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    if not isinstance(obj, dict):
        raise ConfigError(f"{command} config must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        where = "/".join(str(k) for k in best.absolute_path) or "(top level)"
        raise ConfigError(f"{command} config invalid at {where}: {best.message}")
    return obj


def load_config(command, path):
    """Parse and validate a config file; parse errors carry line and column."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON at line {exc.lineno} column {exc.colno}: "
            f"{exc.msg}"
        ) from exc
    validate_params(command, obj)
    return RunConfig(command=command, params=obj,
                     seed=int(obj.get("seed", 0)), source=str(path))
