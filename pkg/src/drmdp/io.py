"""Problem files: JSON schema, loading with JSON-pointer errors, and dumping.

A problem file looks like::

    {"horizon": {"kind": "finite", "T": 3, "gamma": 0.9},
     "initial_state": "s1",
     "states": [{"id": "s1", "stage": 1, "actions": ["a", "b"],
                 "successors": ["s2"], "ambiguity": {...}}, ...]}

Matrices are ``{"shape": [rows, cols], "data": [row-major values]}``.  An
``ambiguity`` block is either the full form (``Q``, ``moments``, ``sets``)
or a shorthand with a ``type`` key: ``point``, ``boxes``, ``intervals``,
``mean``, ``mean_cov``, ``mad`` or ``huber``.  States of the final stage of a
finite horizon need no ambiguity block.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from .ambiguity import AmbiguityError, AmbiguitySet
from .ambiguity.lifting import (disjoint_intervals, lift_huber, lift_mad, lift_mean,
                                lift_mean_covariance, nested_intervals)
from .ambiguity.sets import from_boxes, from_point
from .cones import Cone
from .dp import UncertainMdp
from .mdp import ActionSpace, Horizon, MdpError, MdpSkeleton, StateSpace

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}
_MATRIX = {
    "oneOf": [
        {"type": "object", "required": ["shape", "data"], "additionalProperties": False,
         "properties": {"shape": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                  "minItems": 2, "maxItems": 2},
                        "data": _VEC}},
        {"type": "array", "items": _VEC},
    ]
}
_CONE = {
    "type": "object",
    "required": ["kind"],
    "oneOf": [
        {"properties": {"kind": {"enum": ["zero", "free", "nonneg", "soc", "rsoc", "psd"]},
                        "dim": {"type": "integer", "minimum": 1}},
         "required": ["kind", "dim"], "additionalProperties": False},
        {"properties": {"kind": {"const": "product"},
                        "parts": {"type": "array", "items": {"$ref": "#/$defs/cone"}, "minItems": 1}},
         "required": ["kind", "parts"], "additionalProperties": False},
    ],
}
_SET = {
    "type": "object", "required": ["b", "cone"],
    "properties": {"B": _MATRIX, "D": _MATRIX, "E": _MATRIX, "b": _VEC, "cone": {"$ref": "#/$defs/cone"},
                   "prob_lo": {"type": "number", "minimum": 0, "maximum": 1},
                   "prob_hi": {"type": "number", "minimum": 0, "maximum": 1},
                   "parent": {"type": ["integer", "null"], "minimum": 0},
                   "box": {"type": "array", "items": _VEC, "minItems": 2, "maxItems": 2}},
    "additionalProperties": False,
}
_BOX = {"type": "object", "required": ["lo", "hi"],
        "properties": {"lo": _VEC, "hi": _VEC, "prob_lo": {"type": "number"}, "prob_hi": {"type": "number"},
                       "parent": {"type": ["integer", "null"]}}}
_LEVEL = {"type": "object", "required": ["lo", "hi", "prob_lo", "prob_hi"],
          "properties": {"lo": _VEC, "hi": _VEC, "prob_lo": {"type": "number"}, "prob_hi": {"type": "number"}}}
_AMBIGUITY = {
    "type": "object",
    "oneOf": [
        {"required": ["sets"], "not": {"required": ["type"]},
         "properties": {"Q": {"type": "integer", "minimum": 0},
                        "n_actions": {"type": "integer"}, "n_succ": {"type": "integer"},
                        "moments": {"type": "object",
                                    "properties": {"F": _MATRIX, "G": _MATRIX, "H": _MATRIX, "c": _VEC}},
                        "sets": {"type": "array", "items": _SET, "minItems": 1}}},
        {"required": ["type", "p", "r"], "properties": {"type": {"const": "point"}, "p": _MATRIX, "r": _VEC}},
        {"required": ["type", "boxes"],
         "properties": {"type": {"const": "boxes"}, "boxes": {"type": "array", "items": _BOX, "minItems": 1}}},
        {"required": ["type", "p", "levels"],
         "properties": {"type": {"const": "intervals"}, "p": _MATRIX,
                        "structure": {"enum": ["nested", "disjoint"]},
                        "levels": {"type": "array", "items": _LEVEL, "minItems": 1},
                        "support": {"type": "object", "required": ["lo", "hi"],
                                    "properties": {"lo": _VEC, "hi": _VEC}}}},
        {"required": ["type", "G", "f", "cone", "r"],
         "properties": {"type": {"const": "mean"}, "G": _MATRIX, "f": _VEC, "cone": {"$ref": "#/$defs/cone"},
                        "r": _VEC}},
        {"required": ["type", "p", "Sigma"],
         "properties": {"type": {"const": "mean_cov"}, "p": _MATRIX, "Sigma": _MATRIX, "m": _VEC,
                        "G_mean": _MATRIX, "f_mean": _VEC, "m0": _VEC}},
        {"required": ["type", "p", "m", "f"],
         "properties": {"type": {"const": "mad"}, "p": _MATRIX, "m": _VEC, "f": _VEC, "lo": _VEC, "hi": _VEC}},
        {"required": ["type", "p", "f", "g", "delta"],
         "properties": {"type": {"const": "huber"}, "p": _MATRIX, "f": _VEC, "g": _NUM,
                        "delta": {"type": "number", "exclusiveMinimum": 0}}},
    ],
}
_STATE_ID = {"type": ["string", "integer"]}
PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["horizon", "initial_state", "states"],
    "properties": {
        "horizon": {"type": "object", "required": ["kind", "gamma"],
                    "properties": {"kind": {"enum": ["finite", "infinite"]},
                                   "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                                   "T": {"type": "integer", "minimum": 1}},
                    "additionalProperties": False},
        "initial_state": _STATE_ID,
        "states": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["id", "actions"],
            "properties": {"id": _STATE_ID, "stage": {"type": "integer", "minimum": 1},
                           "actions": {"type": "array", "items": _STATE_ID, "minItems": 1},
                           "successors": {"type": "array", "items": _STATE_ID},
                           "ambiguity": {"$ref": "#/$defs/ambiguity"}},
            "additionalProperties": False}},
        "meta": {"type": "object"},
    },
    "additionalProperties": False,
    "$defs": {"cone": _CONE, "ambiguity": _AMBIGUITY},
}


class ProblemError(ValueError):
    """Invalid problem file; ``pointer`` locates the offending value."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer or "/"
        self.detail = message


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate_problem(obj) -> list[ProblemError]:
    """All schema violations, deepest first within each branch."""
    v = Draft202012Validator(PROBLEM_SCHEMA)
    errors = []
    for err in sorted(v.iter_errors(obj), key=lambda e: list(map(str, e.absolute_path))):
        # for oneOf failures report the most specific sub-error
        leaf = err
        while leaf.context:
            leaf = max(leaf.context, key=lambda e: len(e.absolute_path))
        errors.append(ProblemError(_pointer(leaf.absolute_path), leaf.message))
    return errors


def _matrix(d, rows: int | None = None) -> np.ndarray:
    if isinstance(d, dict):
        a = np.asarray(d["data"], dtype=float)
        shape = tuple(d["shape"])
        if a.size != int(np.prod(shape)):
            raise ValueError(f"matrix data has {a.size} entries, shape {list(shape)} needs {int(np.prod(shape))}")
        return a.reshape(shape)
    if len({len(row) for row in d}) > 1:
        raise ValueError("matrix rows have unequal lengths")
    a = np.asarray(d, dtype=float)
    if a.ndim == 1 and rows is not None:
        a = a.reshape(rows, -1)
    return a


def matrix_json(A) -> dict:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return {"shape": list(A.shape), "data": [float(v) for v in A.ravel()]}


def build_ambiguity(obj: dict, n_actions: int, n_succ: int, state=None) -> AmbiguitySet:
    """Expand one ambiguity block (full form or shorthand)."""
    kind = obj.get("type")
    na, ns = n_actions, n_succ
    if kind is None:
        full = dict(obj)
        full.setdefault("n_actions", na)
        full.setdefault("n_succ", ns)
        if full["n_actions"] != na or full["n_succ"] != ns:
            raise AmbiguityError(f"block declares {full['n_actions']} actions and {full['n_succ']} successors; "
                                 f"the state has {na} and {ns}")
        return AmbiguitySet.from_json(full, state)
    if kind == "point":
        return from_point(_matrix(obj["p"], na), obj["r"], state)
    if kind == "boxes":
        boxes = [(b["lo"], b["hi"], b.get("prob_lo", 1.0), b.get("prob_hi", 1.0), b.get("parent"))
                 for b in obj["boxes"]]
        return from_boxes(na, ns, boxes, state)
    if kind == "intervals":
        p0 = _matrix(obj["p"], na)
        levels = [(lv["lo"], lv["hi"], lv["prob_lo"], lv["prob_hi"]) for lv in obj["levels"]]
        if obj.get("structure", "nested") == "nested":
            return nested_intervals(levels, na, ns, p0, state)
        if "support" not in obj:
            raise AmbiguityError("disjoint intervals need a support box")
        return disjoint_intervals(levels, (obj["support"]["lo"], obj["support"]["hi"]), na, ns, p0, state)
    if kind == "mean":
        return lift_mean(_matrix(obj["G"]), obj["f"], Cone.from_json(obj["cone"]), obj["r"], ns, state)
    if kind == "mean_cov":
        opt = {k: (_matrix(obj[k]) if k == "G_mean" else obj[k]) for k in ("m", "G_mean", "f_mean", "m0") if k in obj}
        return lift_mean_covariance(_matrix(obj["p"], na), _matrix(obj["Sigma"]), state=state, **opt)
    if kind == "mad":
        return lift_mad(_matrix(obj["p"], na), obj["m"], obj["f"], obj.get("lo"), obj.get("hi"), state)
    if kind == "huber":
        return lift_huber(_matrix(obj["p"], na), obj["f"], obj["g"], obj["delta"], state)
    raise AmbiguityError(f"unknown ambiguity shorthand {kind!r}")


def problem_from_json(obj) -> UncertainMdp:
    """Validate and build; raises :class:`ProblemError` with a JSON pointer."""
    errors = validate_problem(obj)
    if errors:
        raise errors[0]
    hz = obj["horizon"]
    try:
        horizon = Horizon(hz["kind"], float(hz["gamma"]), hz.get("T"))
    except MdpError as exc:
        raise ProblemError("/horizon", str(exc)) from None
    ids = [st["id"] for st in obj["states"]]
    stage = {st["id"]: st.get("stage", 1) for st in obj["states"]}
    actions = {st["id"]: tuple(st["actions"]) for st in obj["states"]}
    succ = {st["id"]: tuple(st.get("successors", ())) for st in obj["states"]}
    try:
        mdp = MdpSkeleton(StateSpace(tuple(ids), stage, obj["initial_state"]), ActionSpace(actions), horizon, succ)
    except MdpError as exc:
        raise ProblemError("/states", str(exc)) from None
    amb = {}
    for k, st in enumerate(obj["states"]):
        s = st["id"]
        if mdp.is_terminal(s):
            continue
        ptr = f"/states/{k}/ambiguity"
        if "ambiguity" not in st:
            raise ProblemError(f"/states/{k}", "decision state needs an ambiguity block")
        try:
            amb[s] = build_ambiguity(st["ambiguity"], mdp.n_actions(s), len(mdp.succ(s)), s)
        except (AmbiguityError, ValueError, KeyError) as exc:
            raise ProblemError(ptr, str(exc)) from None
    return UncertainMdp(mdp, amb)


def load_problem(path) -> UncertainMdp:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ProblemError("/", f"not valid JSON: {exc}") from None
    return problem_from_json(obj)


def state_key(s):
    """JSON-friendly state id: strings and integers pass through, anything else is stringified."""
    if isinstance(s, (str, int)) and not isinstance(s, bool):
        return s
    return str(s)


def problem_to_json(problem: UncertainMdp, meta: dict | None = None) -> dict:
    mdp = problem.mdp
    hz = {"kind": mdp.horizon.kind, "gamma": mdp.gamma}
    if mdp.horizon.finite:
        hz["T"] = mdp.horizon.T
    states = []
    for s in mdp.states:
        st = {"id": state_key(s), "stage": mdp.space.stage[s], "actions": [state_key(a) for a in mdp.actions[s]],
              "successors": [state_key(n) for n in mdp.succ(s)]}
        if s in problem.ambiguity and not mdp.is_terminal(s):
            block = problem.ambiguity[s].to_json()
            st["ambiguity"] = block
        states.append(st)
    out = {"horizon": hz, "initial_state": state_key(mdp.space.initial_state), "states": states}
    if meta:
        out["meta"] = meta
    return out


def dump_problem(problem: UncertainMdp, path, meta: dict | None = None):
    Path(path).write_text(json.dumps(problem_to_json(problem, meta)))
