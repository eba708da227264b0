"""Run configuration: defaults, JSON schema validation, and resolution.

A run config is a plain JSON object.  User files override the defaults
key-by-key (nested objects merge); unknown keys anywhere are rejected so a
typo cannot silently fall back to a default.  The resolved config is stored
verbatim in calibration files and dataset indexes.
"""

import copy
import json
import os

import jsonschema

from .errors import ConfigError, DataIOError
from .render import LEVEL_ORDER
from .restore import RESTORER_NAMES
from .waves import WAVE_TYPES

OUTPUT_ENV_VAR = "WAVEBENCH_OUTPUT"

DEFAULTS = {
    "seed": 0,
    "output_root": None,
    "resolution": 512,
    "frame_count": 200,
    "frame_dt": 1.0 / 30.0,
    "profile_count": 10,
    "background_count": 30,
    "background_dir": None,
    "wave_types": list(WAVE_TYPES),
    "levels": list(LEVEL_ORDER),
    "benchmark_subset_size": 60,
    "workers": 1,
    "save_displacements": False,
    "refraction": {
        "n1": 1.33,
        "n2": 1.0,
        "distance": 1.0,
        "max_slope": 4.0,
    },
    "calibration": {
        "tolerance": 0.02,
        "max_iterations": 60,
        "resolution": None,
        "frames": None,
        "reference_wave": "ocean",
        "speed_frames": 12,
        "speed_tolerance": 0.10,
        "speed_max_multiplier": 16.0,
    },
    "ocean": {
        "grid_n": 256,
        "domain": 50.0,
        "wind_speed": 10.0,
        "amplitude": 6.0e-5,
        "cutoff": 2.0,
        "gravity": 9.81,
    },
    "sine": {
        "grid_n": 256,
        "domain": 50.0,
        "slope": 0.2,
        "gravity": 9.81,
    },
    "shallow": {
        "grid_n": 128,
        "domain": 10.0,
        "depth": 1.0,
        "gravity": 9.81,
    },
    "ripples": {
        "grid_n": 256,
        "domain": 50.0,
        "slope": 0.15,
        "gravity": 9.81,
    },
    "restoration": {
        "methods": ["first_frame", "pixel_average", "grid_registration"],
    },
    "registration": {
        "grid_spacing": 16,
        "working_size": 256,
        "pairs_per_frame": 12,
        "iterations": 300,
        "step_size": 0.5,
        "final_step_fraction": 0.05,
        "charbonnier_eps": 1e-3,
        "smoothness_weight": 0.1,
        "magnitude_weight": 0.001,
        "drift_weight": 0.05,
        "smoothing_sigma": 1.0,
        "pyramid_levels": 3,
        "log_every": 10,
        "divergence_patience": 5,
    },
}


def _obj(properties: dict, required=None) -> dict:
    return {
        "type": "object",
        "properties": properties,
        "additionalProperties": False,
        **({"required": list(required)} if required else {}),
    }


def _num(minimum=None, exclusive_minimum=None, nullable=False) -> dict:
    schema = {"type": ["number", "null"] if nullable else "number"}
    if minimum is not None:
        schema["minimum"] = minimum
    if exclusive_minimum is not None:
        schema["exclusiveMinimum"] = exclusive_minimum
    return schema


def _int(minimum, nullable=False) -> dict:
    return {"type": ["integer", "null"] if nullable else "integer", "minimum": minimum}


SCHEMA = _obj(
    {
        "seed": _int(0),
        "output_root": {"type": ["string", "null"]},
        "resolution": _int(16),
        "frame_count": _int(1),
        "frame_dt": _num(exclusive_minimum=0),
        "profile_count": _int(1),
        "background_count": _int(1),
        "background_dir": {"type": ["string", "null"]},
        "wave_types": {
            "type": "array",
            "items": {"enum": list(WAVE_TYPES)},
            "minItems": 1,
            "uniqueItems": True,
        },
        "levels": {
            "type": "array",
            "items": {"enum": list(LEVEL_ORDER)},
            "minItems": 1,
            "uniqueItems": True,
        },
        "benchmark_subset_size": _int(1),
        "workers": _int(1),
        "save_displacements": {"type": "boolean"},
        "refraction": _obj(
            {
                "n1": _num(exclusive_minimum=0),
                "n2": _num(exclusive_minimum=0),
                "distance": _num(exclusive_minimum=0),
                "max_slope": _num(exclusive_minimum=0),
            }
        ),
        "calibration": _obj(
            {
                "tolerance": _num(exclusive_minimum=0),
                "max_iterations": _int(1),
                "resolution": _int(16, nullable=True),
                "frames": _int(1, nullable=True),
                "reference_wave": {"enum": list(WAVE_TYPES)},
                "speed_frames": _int(2),
                "speed_tolerance": _num(exclusive_minimum=0),
                "speed_max_multiplier": _num(exclusive_minimum=0),
            }
        ),
        "ocean": _obj(
            {
                "grid_n": _int(2),
                "domain": _num(exclusive_minimum=0),
                "wind_speed": _num(exclusive_minimum=0),
                "amplitude": _num(exclusive_minimum=0),
                "cutoff": _num(minimum=0, nullable=True),
                "gravity": _num(exclusive_minimum=0),
            }
        ),
        "sine": _obj(
            {
                "grid_n": _int(2),
                "domain": _num(exclusive_minimum=0),
                "slope": _num(exclusive_minimum=0),
                "gravity": _num(exclusive_minimum=0),
            }
        ),
        "shallow": _obj(
            {
                "grid_n": _int(2),
                "domain": _num(exclusive_minimum=0),
                "depth": _num(exclusive_minimum=0),
                "gravity": _num(exclusive_minimum=0),
            }
        ),
        "ripples": _obj(
            {
                "grid_n": _int(2),
                "domain": _num(exclusive_minimum=0),
                "slope": _num(exclusive_minimum=0),
                "gravity": _num(exclusive_minimum=0),
            }
        ),
        "restoration": _obj(
            {
                "methods": {
                    "type": "array",
                    "items": {"enum": list(RESTORER_NAMES)},
                    "uniqueItems": True,
                },
            }
        ),
        "registration": _obj(
            {
                "grid_spacing": _int(2),
                "working_size": _int(16),
                "pairs_per_frame": _int(1),
                "iterations": _int(1),
                "step_size": _num(exclusive_minimum=0),
                "final_step_fraction": _num(exclusive_minimum=0),
                "charbonnier_eps": _num(exclusive_minimum=0),
                "smoothness_weight": _num(minimum=0),
                "magnitude_weight": _num(minimum=0),
                "drift_weight": _num(minimum=0),
                "smoothing_sigma": _num(minimum=0),
                "pyramid_levels": _int(1),
                "log_every": _int(1),
                "divergence_patience": _int(1),
            }
        ),
    }
)


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def validate_config(config: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        parts = []
        for err in errors[:3]:
            where = ".".join(str(p) for p in err.absolute_path) or "<root>"
            parts.append(f"{where}: {err.message}")
        more = f" (and {len(errors) - 3} more)" if len(errors) > 3 else ""
        raise ConfigError("invalid configuration: " + "; ".join(parts) + more)


def resolve_config(user: dict | None = None, overrides: dict | None = None) -> dict:
    """Merge user settings over the defaults, validate, resolve output root.

    `overrides` holds command-line switches and wins over the file; None
    values there are ignored.
    """
    config = copy.deepcopy(DEFAULTS)
    if user:
        if not isinstance(user, dict):
            raise ConfigError(f"configuration must be a JSON object, got {type(user).__name__}")
        config = _merge(config, user)
    if overrides:
        config = _merge(config, {k: v for k, v in overrides.items() if v is not None})
    validate_config(config)
    if config["output_root"] is None:
        config["output_root"] = os.environ.get(OUTPUT_ENV_VAR) or "wavebench_out"
    config["output_root"] = os.path.expanduser(config["output_root"])
    return config


def load_config(path: str | None = None, overrides: dict | None = None) -> dict:
    """Resolve a config from an optional JSON file plus CLI overrides."""
    user = None
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise DataIOError(f"cannot read config {path}: {exc}") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return resolve_config(user, overrides)
