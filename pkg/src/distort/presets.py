"""Built-in run configurations for the worked examples.

Each preset is a plain config dict that validates against the command's
schema, so `--preset name` and `--config file.json` go through the same
pipeline.
"""

import copy

from .config import SCHEMA_VERSION, validate_params
from .errors import ConfigError

_TWO_PERIOD_TREE = {"N": 2, "T": 2.0, "p": 0.5, "x0": 0.0, "step": 1.0}

PRESETS = {
    "tree": {
        "example3_3": {
            "schema_version": SCHEMA_VERSION,
            "distortion": {"family": "power", "gamma": 2.0},
            "tree": dict(_TWO_PERIOD_TREE),
            "payload": [0.0, 1.0, 2.0],
            "compare_naive": True,
        },
        "crossing": {
            "schema_version": SCHEMA_VERSION,
            "distortion": {"family": "power", "gamma": 2.0},
            "tree": dict(_TWO_PERIOD_TREE),
            "payload": [0.0, 1.0, 2.0],
            "crossing_check": True,
        },
        "identity": {
            "schema_version": SCHEMA_VERSION,
            "distortion": {"family": "identity"},
            "tree": dict(_TWO_PERIOD_TREE),
            "payload": [0.0, 1.0, 2.0],
            "compare_naive": True,
        },
    },
    "dynamics": {
        "wang": {
            "schema_version": SCHEMA_VERSION,
            "distortion": {"family": "wang", "alpha": 0.5},
            "model": {"b": 0.0, "x0": 0.0, "T": 1.0},
            "mu_grid": {"t_min": 0.1, "t_max": 1.0, "nt": 46, "x_half": 4.0, "nx": 161},
            "phi": {"s": 0.25, "t": 1.0, "x": 0.0},
        },
        "identity": {
            "schema_version": SCHEMA_VERSION,
            "distortion": {"family": "identity"},
            "model": {"b": 0.0, "x0": 0.0, "T": 1.0},
            "mu_grid": {"t_min": 0.1, "t_max": 1.0, "nt": 46, "x_half": 4.0, "nx": 161},
            "phi": {"s": 0.25, "t": 1.0, "x": 0.0},
        },
        "convergence": {
            "schema_version": SCHEMA_VERSION,
            "distortion": {"family": "wang", "alpha": 0.5},
            "model": {"b": 0.0, "x0": 0.0, "T": 1.0},
            "convergence": {"N_list": [64, 256, 1024, 4096], "eval_t": 0.5, "eval_x": 0.0},
        },
    },
    "density": {
        "identity": {
            "schema_version": SCHEMA_VERSION,
            "model": {"b": 0.0, "x0": 0.0, "T": 1.0},
            "compare": True,
        },
        "wang": {
            "schema_version": SCHEMA_VERSION,
            "model": {"b": 0.5, "x0": 0.0, "T": 1.0},
            "compare": True,
        },
    },
}


def preset_names(command):
    return sorted(PRESETS.get(command, {}))


def get_preset(command, name):
    table = PRESETS.get(command, {})
    if name not in table:
        avail = ", ".join(preset_names(command)) or "none"
        raise ConfigError(
            f"no preset {name!r} for command {command!r} (available: {avail})"
        )
    params = copy.deepcopy(table[name])
    validate_params(command, params)
    return params
