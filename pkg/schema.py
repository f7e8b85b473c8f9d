"""
Experiment Config Schemas
Per-subcommand required/optional fields with JSON-schema property tables,
validated before any computation runs
"""

import logging
from typing import Any, Dict

from jsonschema import Draft7Validator

logger = logging.getLogger(__name__)

UINT64_MAX = 2**64 - 1

_NUMBER_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_INT_RANGE = {
    "oneOf": [
        {"type": "string", "pattern": r"^\d+\.\.\d+$"},
        {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
    ]
}

CHAIN_PROPERTY = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "finite"},
                "name": {"type": "string"},
                "values": _NUMBER_LIST,
                "transition": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": {"type": "number", "minimum": 0}},
                },
            },
            "required": ["kind", "values", "transition"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "ar1"},
                "rho": {"type": "number", "exclusiveMinimum": -1, "exclusiveMaximum": 1},
            },
            "required": ["kind", "rho"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "metropolis"},
                "target": {"enum": ["std_normal"]},
                "proposal_sd": {"type": "number", "exclusiveMinimum": 0},
                "burn_in": {"type": "integer", "minimum": 0},
                "initial_state": {"type": "number"},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
    ]
}

SCHEDULE_PROPERTY = {
    "type": "object",
    "properties": {"c": {"type": "number", "exclusiveMinimum": 0}, "beta": {"type": "number"}},
    "required": ["c", "beta"],
    "additionalProperties": False,
}

THRESHOLDS_PROPERTY = {
    "type": "object",
    "properties": {
        "mean_abs": {"type": "number", "exclusiveMinimum": 0},
        "var_low": {"type": "number", "minimum": 0},
        "var_high": {"type": "number", "exclusiveMinimum": 0},
        "ks": {"type": "number", "exclusiveMinimum": 0},
        "corr_abs": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

# Keys every subcommand accepts
COMMON_PROPERTIES = {
    "subcommand": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0, "maximum": UINT64_MAX},
    "out": {"type": "string", "minLength": 1},
    "workers": {"type": "integer", "minimum": 1},
}

SUBCOMMAND_SCHEMAS = {
    "simulate": {
        "required": ["chain", "n"],
        "optional": [],
        "properties": {"chain": CHAIN_PROPERTY, "n": {"type": "integer", "minimum": 1}},
    },
    "kde": {
        "required": ["chain", "n", "schedule", "points"],
        "optional": ["kernel", "centering_mode", "mode"],
        "properties": {
            "chain": CHAIN_PROPERTY,
            "n": {"type": "integer", "minimum": 1},
            "schedule": SCHEDULE_PROPERTY,
            "points": _NUMBER_LIST,
            "kernel": {"type": "string"},
            "centering_mode": {"enum": ["exact_expectation", "true_density", "zero"]},
            "mode": {"enum": ["theorem1", "corollary"]},
        },
    },
    "dependence": {
        "required": ["chain", "lags"],
        "optional": ["slowly_varying", "tail_model"],
        "properties": {
            "chain": CHAIN_PROPERTY,
            "lags": _INT_RANGE,
            "slowly_varying": {"enum": ["log", "iterated_log", "ramp"]},
            "tail_model": {"enum": ["geometric", "polynomial", "auto"]},
        },
    },
    "clt": {
        "required": ["chain", "n", "schedule", "points", "replicates"],
        "optional": ["kernel", "centering_mode", "thresholds"],
        "properties": {
            "chain": CHAIN_PROPERTY,
            "n": {"type": "integer", "minimum": 1},
            "schedule": SCHEDULE_PROPERTY,
            "points": _NUMBER_LIST,
            "replicates": {"type": "integer", "minimum": 0},
            "kernel": {"type": "string"},
            "centering_mode": {"enum": ["exact_expectation", "true_density", "zero"]},
            "thresholds": THRESHOLDS_PROPERTY,
        },
    },
    "lemma-check": {
        "required": ["chains", "states", "max_lag"],
        "optional": ["functions"],
        "properties": {
            "chains": {"type": "integer", "minimum": 1},
            "states": _INT_RANGE,
            "max_lag": {"type": "integer", "minimum": 4},
            "functions": {"type": "integer", "minimum": 1},
        },
    },
    "clt-conditions": {
        "required": ["chain", "points", "n_grid", "schedule"],
        "optional": ["weights", "kernel"],
        "properties": {
            "chain": CHAIN_PROPERTY,
            "points": _NUMBER_LIST,
            "weights": _NUMBER_LIST,
            "n_grid": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
            "schedule": SCHEDULE_PROPERTY,
            "kernel": {"type": "string"},
        },
    },
    "bias": {
        "required": ["chain", "bandwidths"],
        "optional": ["kernel", "point"],
        "properties": {
            "chain": CHAIN_PROPERTY,
            "bandwidths": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
            "kernel": {"type": "string"},
            "point": {"type": "number"},
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "kernel": "gaussian",
    "centering_mode": "exact_expectation",
    "slowly_varying": "log",
    "tail_model": "auto",
    "functions": 3,
    "point": 0.0,
}


def json_schema_for(subcommand: str) -> Dict[str, Any]:
    """Full JSON schema for one subcommand; unknown keys are rejected"""
    entry = SUBCOMMAND_SCHEMAS[subcommand]
    return {
        "type": "object",
        "properties": {**COMMON_PROPERTIES, **entry["properties"]},
        "required": list(entry["required"]),
        "additionalProperties": False,
    }


def validate_config(subcommand: str, config: Dict[str, Any]) -> Dict[str, Any]:
    """
    Validate an experiment config

    Args:
        subcommand: One of SUBCOMMAND_SCHEMAS
        config: Parsed config with flag overrides applied

    Returns:
        Dictionary with validation results
    """
    result = {"valid": True, "errors": [], "warnings": [], "cleaned_data": {}}
    if subcommand not in SUBCOMMAND_SCHEMAS:
        result["valid"] = False
        result["errors"].append(f"unknown subcommand {subcommand!r}")
        return result
    declared = config.get("subcommand")
    if declared is not None and declared != subcommand:
        result["valid"] = False
        result["errors"].append(f"subcommand: config is for {declared!r}, not {subcommand!r}")

    validator = Draft7Validator(json_schema_for(subcommand))
    for error in sorted(validator.iter_errors(config), key=lambda e: [str(part) for part in e.absolute_path]):
        location = ".".join(str(part) for part in error.absolute_path) or "<root>"
        result["errors"].append(f"{location}: {error.message}")
    if result["errors"]:
        result["valid"] = False
        return result

    cleaned = dict(config)
    for name in SUBCOMMAND_SCHEMAS[subcommand]["optional"] + ["seed"]:
        if name not in cleaned and name in DEFAULTS:
            cleaned[name] = DEFAULTS[name]
            result["warnings"].append(f"{name}: defaulted to {DEFAULTS[name]!r}")
    result["cleaned_data"] = cleaned
    logger.debug(f"✅ {subcommand} config valid ({len(result['warnings'])} defaults applied)")
    return result
