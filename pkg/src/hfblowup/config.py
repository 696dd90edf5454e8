"""Run configuration: a single JSON document validated against a versioned schema.

Example::

    {
      "schema": "hfblowup-config/1",
      "grid": {"n": 48, "L": 24.0, "m": 1.0, "coulomb_pad": 1.5},
      "physics": {"mode": "hartree-fock", "margin": 1.0},
      "initial": {"shells": [{"l": 0, "scale": 2.0}, {"l": 1, "scale": 2.0}]},
      "integrator": {"dt": 0.01, "t_end": 4.0, "sample_every": 5},
      "output": {"directory": "runs/collapse", "radii": [1.0, 2.0]},
      "seed": 0
    }

``physics`` takes exactly one of ``kappa`` (absolute coupling) or ``margin``
(``kappa = kappa* (1 + margin)`` with ``kappa*`` the critical coupling of the
initial state). ``initial`` takes exactly one of ``shells`` or ``container``.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

SCHEMA_VERSION = "hfblowup-config/1"

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "grid", "physics", "initial"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n", "L"],
            "properties": {
                "n": {"type": "integer", "minimum": 8, "multipleOf": 2},
                "L": _POS,
                "m": {"type": "number", "minimum": 0},
                "coulomb_pad": {"type": "number", "exclusiveMinimum": 1, "maximum": 2},
            },
        },
        "physics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["hartree-fock", "hartree", "free"]},
                "kappa": {"type": "number", "minimum": 0},
                "margin": {"type": "number", "exclusiveMinimum": -1},
            },
        },
        "initial": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shells": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["l"],
                        "properties": {
                            "l": {"type": "integer", "minimum": 0},
                            "profile": {"enum": ["gaussian", "exponential", "poly_gaussian"]},
                            "scale": _POS,
                            "degree": {"type": "integer", "minimum": 0},
                        },
                    },
                },
                "container": {"type": "string"},
                "dilation": _POS,
            },
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dt", "t_end"],
            "properties": {
                "dt": _POS,
                "t_end": {"type": "number", "minimum": 0},
                "sample_every": {"type": "integer", "minimum": 1},
                "tail_frac_max": _POS,
                "sobolev_growth_max": _POS,
                "drift_tol": _POS,
                "reorthonormalize": {"type": "boolean"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string"},
                "csv": {"type": "boolean"},
                "jsonl": {"type": "boolean"},
                "radii": {"type": "array", "items": _POS},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "commutator_iterations": {"type": "integer", "minimum": 1},
                "lambda_max": {"type": "number", "minimum": 0},
                "n_scan": {"type": "integer", "minimum": 2},
                "identity_tol": _POS,
                "conservation_tol": _POS,
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    },
}

DEFAULTS = {
    "grid": {"m": 1.0, "coulomb_pad": 2.0},
    "physics": {"mode": "hartree-fock"},
    "initial": {"dilation": 1.0},
    "integrator": {
        "dt": 0.01,
        "t_end": 1.0,
        "sample_every": 1,
        "tail_frac_max": 1e-3,
        "sobolev_growth_max": 10.0,
        "drift_tol": 1e-6,
        "reorthonormalize": False,
    },
    "output": {"directory": "run", "csv": True, "jsonl": True, "radii": []},
    "verify": {
        "commutator_iterations": 40,
        "lambda_max": 10.0,
        "n_scan": 200,
        "identity_tol": 1e-3,
        "conservation_tol": 1e-6,
    },
    "seed": 0,
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line when known."""


def _line_of(text: str, path) -> int | None:
    """Best-effort line number of the key at JSON `path` inside `text`."""
    pos = 0
    found = False
    for key in path:
        if isinstance(key, int):
            continue
        nxt = text.find(f'"{key}"', pos)
        if nxt < 0:
            break
        pos, found = nxt, True
    return text.count("\n", 0, pos) + 1 if found else None


def _where(text: str, path) -> str:
    dotted = ".".join(str(p) for p in path) or "<root>"
    line = _line_of(text, path)
    return f"line {line}: {dotted}" if line else dotted


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_config(text: str, source: str = "<config>") -> dict:
    """Validate `text` and return the resolved configuration (defaults filled in)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{source}: line {err.lineno} column {err.colno}: {err.msg}") from None
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{source}: {_where(text, list(e.absolute_path))}: {e.message}" for e in errors]
        raise ConfigError("\n".join(lines))

    phys = raw["physics"]
    if ("kappa" in phys) == ("margin" in phys):
        raise ConfigError(f"{source}: {_where(text, ['physics'])}: set exactly one of 'kappa' or 'margin'")
    init = raw["initial"]
    if ("shells" in init) == ("container" in init):
        raise ConfigError(f"{source}: {_where(text, ['initial'])}: set exactly one of 'shells' or 'container'")
    return _merge(DEFAULTS, raw)


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"
