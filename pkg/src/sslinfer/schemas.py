"""JSON schemas for command outputs."""

MANIFEST = {
    "type": "object",
    "required": ["argv", "command", "config_hash", "seeds", "version", "wall_time_s", "stage_timings"],
    "properties": {
        "argv": {"type": "array", "items": {"type": "string"}},
        "command": {"type": "string"},
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "seeds": {"type": "object"},
        "version": {"type": "string"},
        "wall_time_s": {"type": "number", "minimum": 0},
        "stage_timings": {"type": "object", "additionalProperties": {"type": "number"}},
        "generator": {"type": "string"},
    },
}

RESULT = {
    "type": "object",
    "required": ["method", "psi", "estimate", "std_error", "ci", "z_stat", "alpha", "n", "N", "p", "diagnostics", "manifest"],
    "properties": {
        "method": {"enum": ["dlasso1", "dlasso2", "dssl", "sssl"]},
        "psi": {"type": "number"},
        "estimate": {"type": "number"},
        "std_error": {"type": "number", "minimum": 0},
        "ci": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "z_stat": {"type": "number"},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "n": {"type": "integer", "minimum": 2},
        "N": {"type": "integer", "minimum": 0},
        "p": {"type": "integer", "minimum": 1},
        "diagnostics": {
            "type": "object",
            "required": ["v_l1_l2_ratio", "omega_inverse_defect"],
            "properties": {
                "v_l1_l2_ratio": {"type": "number", "minimum": 1},
                "omega_inverse_defect": {"type": "number", "minimum": 0},
            },
        },
        "manifest": MANIFEST,
    },
}

_NUM_OR_NULL = {"type": ["number", "null"]}

SIM_REPORT = {
    "type": "object",
    "required": ["config", "truth", "rows", "records", "manifest"],
    "properties": {
        "config": {"type": "object"},
        "truth": {"type": "array", "items": {"type": "number"}},
        "rows": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["method", "target", "bias", "sd", "rmse", "half_len", "coverage", "reps_used", "reps_failed"],
                "properties": {
                    "method": {"type": "string"},
                    "target": {"type": "string"},
                    "bias": _NUM_OR_NULL,
                    "sd": _NUM_OR_NULL,
                    "rmse": _NUM_OR_NULL,
                    "half_len": _NUM_OR_NULL,
                    "coverage": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                    "reps_used": {"type": "integer", "minimum": 0},
                    "reps_failed": {"type": "integer", "minimum": 0},
                },
            },
        },
        "records": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["rep", "seed", "method", "target", "truth", "estimate", "ci_low", "ci_high", "error"],
            },
        },
        "manifest": MANIFEST,
    },
}

HOLM = {
    "type": "object",
    "required": ["pvalues", "adjusted", "manifest"],
    "properties": {
        "pvalues": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "adjusted": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "manifest": MANIFEST,
    },
}
