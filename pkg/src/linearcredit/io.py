"""JSON file formats for models, contracts and portfolios.

Every document is checked against a JSON schema (unknown keys are
rejected) before it is turned into library objects, so malformed input
fails with a message that names the offending field.
"""

from __future__ import annotations

import json

import jsonschema
import numpy as np

from .exceptions import InvalidInputError
from .model import LhccParams, LhcParams, LinearModel, State
from .portfolio import Portfolio

__all__ = [
    "MODEL_SCHEMA",
    "CONTRACT_SCHEMA",
    "OPTION_SCHEMA",
    "PORTFOLIO_SCHEMA",
    "TRANCHE_SCHEMA",
    "load_json",
    "validate_document",
    "model_from_dict",
    "model_to_dict",
    "state_from_dict",
    "portfolio_from_dict",
    "dumps",
]

_NUM = {"type": "number"}
_NONNEG = {"type": "number", "minimum": 0}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_NONNEG_VEC = {"type": "array", "items": _NONNEG, "minItems": 1}
_POS_VEC = {"type": "array", "items": _POS, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}
_STATE = {
    "type": "object",
    "properties": {
        "y": {"oneOf": [_NONNEG, _NONNEG_VEC]},
        "x": {"type": "array", "items": _NUM},
    },
    "required": ["y", "x"],
    "additionalProperties": False,
}

_LHCC = {
    "type": "object",
    "properties": {
        "type": {"const": "lhcc"},
        "m": {"type": "integer", "minimum": 1},
        "gamma1": _NONNEG,
        "kappa": _POS_VEC,
        "theta": _NONNEG_VEC,
        "sigma": _NONNEG_VEC,
        "state": _STATE,
        "name": {"type": "string"},
    },
    "required": ["type", "m", "gamma1", "kappa", "theta", "sigma"],
    "additionalProperties": False,
}

_LHC = {
    "type": "object",
    "properties": {
        "type": {"const": "lhc"},
        "m": {"type": "integer", "minimum": 1},
        "gamma": _NONNEG_VEC,
        "b": _VEC,
        "beta": _MAT,
        "sigma": _NONNEG_VEC,
        "state": _STATE,
        "name": {"type": "string"},
    },
    "required": ["type", "m", "gamma", "b", "beta", "sigma"],
    "additionalProperties": False,
}

_LINEAR = {
    "type": "object",
    "properties": {
        "type": {"const": "linear"},
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 0},
        "c": _MAT,
        "gamma": {"type": "array", "items": {"type": "array", "items": _NUM}},
        "b": {"type": "array", "items": {"type": "array", "items": _NUM}},
        "beta": {"type": "array", "items": {"type": "array", "items": _NUM}},
        "a": _NONNEG_VEC,
        "state": _STATE,
        "name": {"type": "string"},
    },
    "required": ["type", "n", "m", "c", "gamma", "b", "beta", "a"],
    "additionalProperties": False,
}

MODEL_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "model",
    "oneOf": [_LHCC, _LHC, _LINEAR],
}

CONTRACT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "contract",
    "type": "object",
    "properties": {
        "type": {"enum": ["bond", "cds", "ucva"]},
        "bond": {"enum": ["zero", "recovery_maturity", "recovery_default", "contingent_default"]},
        "t": _NONNEG,
        "t0": _NONNEG,
        "tM": _NONNEG,
        "frequency": {"type": "integer", "minimum": 1},
        "recovery": {"type": "number", "minimum": 0, "maximum": 1},
        "r": _NUM,
        "strike_bp": _NUM,
        "exposure": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "exponents": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "coefficient": _NUM,
                },
                "required": ["exponents", "coefficient"],
                "additionalProperties": False,
            },
        },
        "nodes": {"type": "integer", "minimum": 1},
    },
    "required": ["type", "tM"],
    "additionalProperties": False,
}

OPTION_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "option",
    "type": "object",
    "properties": {
        "type": {"enum": ["cds", "cdis"]},
        "t": _NONNEG,
        "t0": _NONNEG,
        "tM": _POS,
        "strike_bp": _NONNEG,
        "order": {"type": "integer", "minimum": 1},
        "method": {"enum": ["legendre", "chebyshev"]},
        "frequency": {"type": "integer", "minimum": 1},
        "recovery": {"type": "number", "minimum": 0, "maximum": 1},
        "r": _NUM,
        "n_firms": {"type": "integer", "minimum": 1},
        "n_defaulted": {"type": "integer", "minimum": 0},
    },
    "required": ["type", "t0", "tM", "strike_bp", "order"],
    "additionalProperties": False,
}

_BLOCK = {"oneOf": [_LHCC, _LHC]}

PORTFOLIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "portfolio",
    "type": "object",
    "properties": {
        "blocks": {"type": "array", "items": _BLOCK, "minItems": 1},
        "firms": {
            "type": "array",
            "minItems": 1,
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "properties": {"weights": _NONNEG_VEC, "alive": {"type": "boolean"}},
                        "required": ["weights"],
                        "additionalProperties": False,
                    },
                    {
                        "type": "object",
                        "properties": {
                            "exponents": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                            "alive": {"type": "boolean"},
                        },
                        "required": ["exponents"],
                        "additionalProperties": False,
                    },
                ]
            },
        },
        "recovery": {"type": "number", "minimum": 0, "maximum": 1},
    },
    "required": ["blocks", "firms"],
    "additionalProperties": False,
}

TRANCHE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "tranche or index contract",
    "type": "object",
    "properties": {
        "t": _NONNEG,
        "t0": _NONNEG,
        "tM": _POS,
        "frequency": {"type": "integer", "minimum": 1},
        "r": _NUM,
        "lower": {"type": "integer", "minimum": 0},
        "upper": {"type": "integer", "minimum": 1},
        "spread_bp": _NONNEG,
        "n_defaulted": {"type": "integer", "minimum": 0},
    },
    "required": ["tM"],
    "additionalProperties": False,
}


def validate_document(doc, schema: dict) -> dict:
    """Validate ``doc`` against ``schema``; raise :class:`InvalidInputError` on failure."""
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        # oneOf failures hide the useful message in the best-matching branch
        err = jsonschema.exceptions.best_match(errors)
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise InvalidInputError(f"{schema.get('title', 'document')} at {where}: {err.message}")
    return doc


def load_json(path, schema: dict | None = None) -> dict:
    """Read a JSON file and optionally validate it."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise InvalidInputError(f"no such file: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    return validate_document(doc, schema) if schema is not None else doc


def _check_len(doc, key, n):
    if len(doc[key]) != n:
        raise InvalidInputError(f"'{key}' must have {n} entries, got {len(doc[key])}")


def model_from_dict(doc: dict):
    """Build :class:`LhccParams`, :class:`LhcParams` or :class:`LinearModel` from a model document."""
    validate_document(doc, MODEL_SCHEMA)
    kind = doc["type"]
    if kind == "lhcc":
        m = doc["m"]
        for key in ("kappa", "theta", "sigma"):
            _check_len(doc, key, m)
        return LhccParams(doc["gamma1"], np.asarray(doc["kappa"]), np.asarray(doc["theta"]), np.asarray(doc["sigma"]))
    if kind == "lhc":
        m = doc["m"]
        for key in ("gamma", "b", "beta", "sigma"):
            _check_len(doc, key, m)
        return LhcParams(np.asarray(doc["gamma"]), np.asarray(doc["b"]), np.asarray(doc["beta"]), np.asarray(doc["sigma"]))
    n, m = doc["n"], doc["m"]
    _check_len(doc, "a", n)

    def mat(key, rows, cols):
        arr = np.asarray(doc[key], dtype=float)
        if arr.size == 0 and rows * cols == 0:
            return np.zeros((rows, cols))
        if arr.shape != (rows, cols):
            raise InvalidInputError(f"'{key}' must be {rows}x{cols}")
        return arr

    return LinearModel(mat("c", n, n), mat("gamma", n, m), mat("b", m, n), mat("beta", m, m), np.asarray(doc["a"]))


def model_to_dict(model) -> dict:
    if isinstance(model, LhccParams):
        return {
            "type": "lhcc", "m": model.m, "gamma1": float(model.gamma1), "kappa": model.kappa.tolist(),
            "theta": model.theta.tolist(), "sigma": model.sigma.tolist(),
        }
    if isinstance(model, LhcParams):
        return {
            "type": "lhc", "m": model.m, "gamma": model.gamma.tolist(), "b": model.b.tolist(),
            "beta": model.beta.tolist(), "sigma": model.sigma.tolist(),
        }
    if isinstance(model, LinearModel):
        return {
            "type": "linear", "n": model.n, "m": model.m, "c": model.c.tolist(), "gamma": model.gamma_block.tolist(),
            "b": model.b.tolist(), "beta": model.beta.tolist(), "a": model.a.tolist(),
        }
    raise InvalidInputError(f"cannot serialise {type(model).__name__}")


def state_from_dict(doc: dict, model=None):
    """Initial state stored under ``"state"``; a vector ``(y, x)`` for linear models."""
    if "state" not in doc:
        raise InvalidInputError("the model file has no 'state' entry")
    st = doc["state"]
    y = np.atleast_1d(np.asarray(st["y"], dtype=float))
    x = np.asarray(st["x"], dtype=float)
    if isinstance(model, LinearModel):
        if y.shape[0] != model.n or x.shape[0] != model.m:
            raise InvalidInputError(f"state needs {model.n} survival and {model.m} factor entries")
        return np.concatenate([y, x])
    if y.shape[0] != 1:
        raise InvalidInputError("state 'y' must be a scalar for LHC models")
    if model is not None and x.shape[0] != model.m:
        raise InvalidInputError(f"state 'x' needs {model.m} entries")
    return State(float(y[0]), x)


def portfolio_from_dict(doc: dict):
    """Return ``(portfolio, states, alive)`` from a portfolio document."""
    validate_document(doc, PORTFOLIO_SCHEMA)
    blocks, states = [], []
    for i, bdoc in enumerate(doc["blocks"]):
        blk = model_from_dict(bdoc)
        blocks.append(blk)
        try:
            states.append(state_from_dict(bdoc, blk))
        except InvalidInputError as exc:
            raise InvalidInputError(f"block {i}: {exc}") from exc
    firms = doc["firms"]
    kinds = {("weights" in f) for f in firms}
    if len(kinds) != 1:
        raise InvalidInputError("firms must all use 'weights' or all use 'exponents'")
    linear = kinds.pop()
    rows = [f["weights"] if linear else f["exponents"] for f in firms]
    if any(len(r) != len(blocks) for r in rows):
        raise InvalidInputError(f"every firm row needs {len(blocks)} entries")
    alive = np.array([f.get("alive", True) for f in firms], dtype=bool)
    pf = Portfolio(tuple(blocks), np.asarray(rows, dtype=float), doc.get("recovery", 0.4),
                   "linear" if linear else "polynomial")
    return pf, states, alive


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, full float precision, ``NaN`` written as ``null``."""
    def clean(v):
        if isinstance(v, dict):
            return {str(k): clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        if isinstance(v, np.ndarray):
            return clean(v.tolist())
        if isinstance(v, (float, np.floating)) and not np.isfinite(v):
            return None
        return v

    return json.dumps(clean(obj), sort_keys=True, indent=2, default=_default)
