"""JSON schemas for every file the command line reads or writes."""

from __future__ import annotations

import jsonschema

__all__ = ["SCHEMAS", "validate"]

_NUM = {"type": ["number", "null"]}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_KDE = {"type": "array", "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}}

_SAMPLER = {
    "type": "object",
    "properties": {
        "n_chains": {"type": "integer", "minimum": 1},
        "n_warmup": {"type": "integer", "minimum": 0},
        "n_draws": {"type": "integer", "minimum": 1},
        "target_accept": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "max_tree_depth": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

_DGP = {
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "effect_size": {"type": "number"},
        "outcome_kind": {"enum": ["binary", "continuous"]},
        "treatment_order": {"enum": ["first", "second"]},
        "outcome_order": {"enum": ["first", "second"]},
        "label_noise": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer"},
    },
    "additionalProperties": False,
}

SCHEMAS = {
    "dataset_schema": {
        "type": "object",
        "required": ["columns"],
        "properties": {
            "columns": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["name", "kind", "role"],
                    "properties": {
                        "name": {"type": "string"},
                        "kind": {"enum": ["binary", "categorical", "continuous"]},
                        "role": {"enum": ["confounder", "treatment", "outcome"]},
                    },
                },
            }
        },
    },
    "dgp_spec": _DGP,
    "fit_config": {
        "type": "object",
        "properties": {
            "sampler": _SAMPLER,
            "seed": {"type": "integer"},
            "outcome_order": {"enum": ["first", "second"]},
            "propensity_order": {"enum": ["first", "second"]},
            "fluctuation_form": {"enum": ["one", "two"]},
            "prior_scale": {"type": "number", "exclusiveMinimum": 0},
            "epsilon_prior_scale": {"type": "number", "exclusiveMinimum": 0},
            "write_samples": {"type": "boolean"},
        },
        "additionalProperties": False,
    },
    "sweep_spec": {
        "type": "object",
        "properties": {
            "data_sizes": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
            "replications": {"type": "integer", "minimum": 1},
            "cases": {"type": "array", "items": {"enum": ["NMS", "OMS", "OPMS"]}, "minItems": 1},
            "effect_sizes": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            "methods": {
                "type": "array",
                "items": {"enum": ["Classical", "BTmleM", "BTmleSS", "BnTmle1p", "BnTmle2p"]},
                "minItems": 1,
            },
            "base_seed": {"type": "integer"},
            "worker_count": {"type": "integer", "minimum": 1},
            "outcome_kind": {"enum": ["binary", "continuous"]},
            "label_noise": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
            "literal_paper_dgp": {"type": "boolean"},
            "sampler": _SAMPLER,
        },
        "additionalProperties": False,
    },
    "bayes_result": {
        "type": "object",
        "required": ["method", "ate_mean", "ci95", "n_draws", "diagnostics", "kde"],
        "properties": {
            "method": {"enum": ["BTmleM", "BTmleSS", "BnTmle1p", "BnTmle2p"]},
            "ate_mean": {"type": "number"},
            "ci95": _PAIR,
            "n_draws": {"type": "integer", "minimum": 2},
            "diagnostics": {"type": "object"},
            "kde": _KDE,
            "samples_path": {"type": "string"},
        },
    },
    "classical_result": {
        "type": "object",
        "required": ["method", "ate", "se", "ci95", "epsilon", "fluctuation_form", "diagnostics"],
        "properties": {
            "method": {"const": "Classical"},
            "ate": {"type": "number"},
            "se": {"type": "number"},
            "ci95": _PAIR,
            "epsilon": {"type": "array", "items": {"type": "number"}},
            "fluctuation_form": {"enum": ["one", "two"]},
            "diagnostics": {"type": "object"},
        },
    },
    "case_study": {
        "type": "object",
        "required": ["kind", "dgp", "truth", "sampler", "methods"],
        "properties": {
            "kind": {"const": "case_study"},
            "dgp": _DGP,
            "truth": {"type": "number"},
            "sampler": _SAMPLER,
            "methods": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["method", "ate_mean", "ci95", "sd", "contains_truth", "error"],
                    "properties": {
                        "method": {"type": "string"},
                        "ate_mean": _NUM,
                        "ci95": _PAIR,
                        "sd": _NUM,
                        "contains_truth": {"type": "boolean"},
                        "error": {"type": ["string", "null"]},
                        "kde": _KDE,
                        "max_rhat": _NUM,
                    },
                },
            },
        },
    },
    "sweep_report": {
        "type": "object",
        "required": ["kind", "rows"],
        "properties": {
            "kind": {"const": "sweep"},
            "rows": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["data_size", "case", "effect_size", "method", "coverage_pct"],
                    "properties": {
                        "data_size": {"type": "integer"},
                        "case": {"enum": ["NMS", "OMS", "OPMS"]},
                        "effect_size": {"type": "number"},
                        "method": {"type": "string"},
                        "n_valid": {"type": "integer", "minimum": 0},
                        "n_failed": {"type": "integer", "minimum": 0},
                        "coverage_pct": {"type": ["number", "null"], "minimum": 0, "maximum": 100},
                        "coverage_ci_low": {"type": ["number", "null"], "minimum": 0, "maximum": 100},
                        "coverage_ci_high": {"type": ["number", "null"], "minimum": 0, "maximum": 100},
                    },
                },
            },
        },
    },
}


def validate(payload, name: str) -> None:
    """Raise ``jsonschema.ValidationError`` unless ``payload`` matches schema ``name``."""
    jsonschema.validate(payload, SCHEMAS[name])
