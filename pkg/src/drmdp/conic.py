"""Solver-agnostic conic program representation and the solve contract.

A :class:`ConicProgramIR` holds named variable blocks, a linear objective
(always minimized) and affine constraints of the form ``rhs - sum_b M_b x_b``
in a cone.  Equalities are the special case of the zero cone and are kept in
their own list so emitted programs read like the math they encode.

Backends translate the IR into their own format.  ``clarabel`` is the
default; ``cvxpy:<SOLVER>`` routes through cvxpy and is mostly useful as an
independent cross-check.
"""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .cones import SQRT2, Cone, Zero, cone_violation


class SolveStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_TROUBLE = "numerical_trouble"


class IRError(ValueError):
    pass


@dataclass(frozen=True)
class VariableBlock:
    name: str
    dim: int
    cone: Cone | None = None

    def __post_init__(self):
        if self.dim <= 0:
            raise IRError(f"block {self.name!r} has non-positive dimension")
        if self.cone is not None and self.cone.size != self.dim:
            raise IRError(f"block {self.name!r}: cone size {self.cone.size} != dim {self.dim}")


@dataclass(frozen=True)
class AffineConstraint:
    """``rhs - sum(M @ x[name] for name, M in terms)`` must lie in ``cone``."""

    label: str
    terms: tuple[tuple[str, np.ndarray], ...]
    rhs: np.ndarray
    cone: Cone

    @property
    def rows(self) -> int:
        return len(self.rhs)

    def evaluate(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        s = np.array(self.rhs, dtype=float)
        for name, M in self.terms:
            s = s - M @ values[name]
        return s


@dataclass(frozen=True)
class Tolerances:
    primal_residual: float = 1e-8
    relative_gap: float = 1e-7
    solver_tol: float = 1e-10
    max_iter: int = 200

    @classmethod
    def from_env(cls) -> "Tolerances":
        """Defaults, optionally overridden by ``DRMDP_SOLVER_TOL``.

        The variable holds comma-separated ``key=value`` pairs, e.g.
        ``primal_residual=1e-7,relative_gap=1e-6``.
        """
        raw = os.environ.get("DRMDP_SOLVER_TOL", "").strip()
        if not raw:
            return cls()
        kwargs = {}
        for item in raw.split(","):
            key, _, val = item.partition("=")
            key = key.strip()
            if key not in cls.__dataclass_fields__:
                raise ValueError(f"unknown tolerance {key!r} in DRMDP_SOLVER_TOL")
            kwargs[key] = int(val) if key == "max_iter" else float(val)
        return cls(**kwargs)


@dataclass
class SolveOutcome:
    status: SolveStatus
    values: dict[str, np.ndarray]
    objective: float
    residuals: dict[str, float]
    duals: dict[str, np.ndarray] = field(default_factory=dict)
    backend: str = "clarabel"
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


class ConicProgramIR:
    def __init__(self):
        self.blocks: list[VariableBlock] = []
        self.objective: dict[str, np.ndarray] = {}
        self.objective_constant = 0.0
        self.equalities: list[AffineConstraint] = []
        self.memberships: list[AffineConstraint] = []
        self._index: dict[str, int] = {}

    # construction -----------------------------------------------------
    def add_block(self, name: str, dim: int, cone: Cone | None = None) -> VariableBlock:
        if name in self._index:
            raise IRError(f"duplicate block name {name!r}")
        blk = VariableBlock(name, int(dim), cone)
        self._index[name] = len(self.blocks)
        self.blocks.append(blk)
        return blk

    def block(self, name: str) -> VariableBlock:
        try:
            return self.blocks[self._index[name]]
        except KeyError:
            raise IRError(f"unknown block {name!r}") from None

    def has_block(self, name: str) -> bool:
        return name in self._index

    def set_objective(self, terms: Mapping[str, np.ndarray], constant: float = 0.0):
        self.objective = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in terms.items()}
        self.objective_constant = float(constant)

    def _terms(self, terms: Mapping[str, np.ndarray], rows: int) -> tuple:
        out = []
        for name, M in terms.items():
            M = np.asarray(M, dtype=float)
            if M.ndim == 1:
                M = M.reshape(rows, -1)
            blk = self.block(name)
            if M.shape != (rows, blk.dim):
                raise IRError(f"term for {name!r} has shape {M.shape}, expected {(rows, blk.dim)}")
            out.append((name, M))
        return tuple(out)

    def add_equality(self, label: str, terms: Mapping[str, np.ndarray], rhs) -> AffineConstraint:
        """``sum_b M_b x_b == rhs``."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        con = AffineConstraint(label, self._terms(terms, len(rhs)), rhs, Zero(len(rhs)))
        self.equalities.append(con)
        return con

    def add_membership(self, label: str, terms: Mapping[str, np.ndarray], rhs, cone: Cone) -> AffineConstraint:
        """``rhs - sum_b M_b x_b`` in ``cone``."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        if cone.size != len(rhs):
            raise IRError(f"membership {label!r}: cone size {cone.size} != rows {len(rhs)}")
        con = AffineConstraint(label, self._terms(terms, len(rhs)), rhs, cone)
        self.memberships.append(con)
        return con

    # inspection -------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return sum(b.dim for b in self.blocks)

    def constraints(self) -> list[AffineConstraint]:
        return self.equalities + self.memberships

    def labels(self) -> list[str]:
        return [c.label for c in self.constraints()]

    def find(self, prefix: str) -> list[AffineConstraint]:
        return [c for c in self.constraints() if c.label.startswith(prefix)]

    def validate(self):
        seen = set()
        for c in self.constraints():
            if c.label in seen:
                raise IRError(f"duplicate constraint label {c.label!r}")
            seen.add(c.label)
        for name, v in self.objective.items():
            if len(v) != self.block(name).dim:
                raise IRError(f"objective term for {name!r} has wrong length")

    def objective_value(self, values: Mapping[str, np.ndarray]) -> float:
        return float(self.objective_constant + sum(v @ values[k] for k, v in self.objective.items()))

    def primal_residual(self, values: Mapping[str, np.ndarray]) -> float:
        """Largest scaled violation over all constraints and block cones."""
        worst = 0.0
        for c in self.constraints():
            s = c.evaluate(values)
            scale = 1.0 + float(np.max(np.abs(c.rhs), initial=0.0))
            worst = max(worst, cone_violation(c.cone, s) / scale)
        for blk in self.blocks:
            if blk.cone is not None:
                worst = max(worst, cone_violation(blk.cone, values[blk.name]))
        return worst

    # serialization ----------------------------------------------------
    def to_json(self) -> dict:
        def mat(M):
            return {"shape": list(M.shape), "data": [float(x) for x in M.ravel()]}

        def con(c: AffineConstraint):
            return {"label": c.label, "terms": {k: mat(M) for k, M in c.terms},
                    "rhs": [float(x) for x in c.rhs], "cone": c.cone.to_json()}

        return {
            "blocks": [{"name": b.name, "dim": b.dim,
                        "cone": None if b.cone is None else b.cone.to_json()} for b in self.blocks],
            "objective": {k: [float(x) for x in v] for k, v in self.objective.items()},
            "objective_constant": self.objective_constant,
            "equalities": [con(c) for c in self.equalities],
            "memberships": [con(c) for c in self.memberships],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=False)

    @classmethod
    def from_json(cls, obj: dict) -> "ConicProgramIR":
        ir = cls()
        for b in obj["blocks"]:
            ir.add_block(b["name"], b["dim"], None if b["cone"] is None else Cone.from_json(b["cone"]))
        ir.set_objective({k: np.array(v) for k, v in obj["objective"].items()},
                         obj.get("objective_constant", 0.0))

        def terms(t):
            return {k: np.array(m["data"], dtype=float).reshape(m["shape"]) for k, m in t.items()}

        for c in obj["equalities"]:
            ir.add_equality(c["label"], terms(c["terms"]), c["rhs"])
        for c in obj["memberships"]:
            ir.add_membership(c["label"], terms(c["terms"]), c["rhs"], Cone.from_json(c["cone"]))
        return ir


# ---------------------------------------------------------------------------
# compilation to the standard form  A x + s = b,  s in K


@dataclass
class _Compiled:
    q: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list[Cone]                # atomic, zero/nonneg/soc/psd only
    block_slices: dict[str, slice]
    row_slices: dict[str, slice]     # label -> rows in A
    rsoc_rows: list[tuple[int, int]]  # (start, size) of rotated cones, in A rows
    constant: float = 0.0

    def entry_index(self, row: int, col: int) -> int:
        """Position of ``A[row, col]`` inside ``A.data`` (the entry must be stored)."""
        lo, hi = self.A.indptr[col], self.A.indptr[col + 1]
        k = lo + int(np.searchsorted(self.A.indices[lo:hi], row))
        if k >= hi or self.A.indices[k] != row:
            raise IRError(f"entry ({row}, {col}) is not stored")
        return k


def _rsoc_transform(k: int) -> np.ndarray:
    T = np.eye(k)
    T[0, 0] = T[0, 1] = T[1, 0] = 1 / SQRT2
    T[1, 1] = -1 / SQRT2
    return T


def compile_ir(ir: ConicProgramIR) -> _Compiled:
    ir.validate()
    offsets, n = {}, 0
    for blk in ir.blocks:
        offsets[blk.name] = slice(n, n + blk.dim)
        n += blk.dim
    q = np.zeros(n)
    for name, v in ir.objective.items():
        q[offsets[name]] += v

    rows_i, cols_i, vals, b_parts, cones = [], [], [], [], []
    row_slices: dict[str, slice] = {}
    rsoc_rows = []
    m = 0

    def emit(label, terms, rhs, cone: Cone):
        nonlocal m
        start = m
        blocks_M = {name: M for name, M in terms}
        k = 0
        for part in cone.flatten():
            size = part.size
            if part.kind == "free":
                k += size
                continue
            sub_rhs = rhs[k:k + size]
            subs = {name: M[k:k + size] for name, M in blocks_M.items()}
            kind = part.kind
            if kind == "rsoc":
                T = _rsoc_transform(size)
                sub_rhs = T @ sub_rhs
                subs = {name: T @ M for name, M in subs.items()}
                rsoc_rows.append((m, size))
                kind = "soc"
            for name, M in subs.items():
                r, c = np.nonzero(M)
                rows_i.append(r + m)
                cols_i.append(c + offsets[name].start)
                vals.append(M[r, c])
            b_parts.append(sub_rhs)
            cones.append(Cone(kind, part.dim))
            m += size
            k += size
        row_slices[label] = slice(start, m)

    for c in ir.equalities:
        emit(c.label, c.terms, c.rhs, c.cone)
    for c in ir.memberships:
        emit(c.label, c.terms, c.rhs, c.cone)
    for blk in ir.blocks:
        if blk.cone is not None:
            emit(f"__cone__{blk.name}", ((blk.name, -np.eye(blk.dim)),), np.zeros(blk.dim), blk.cone)

    if rows_i:
        A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows_i), np.concatenate(cols_i))),
                          shape=(m, n))
    else:
        A = sp.csc_matrix((m, n))
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)
    A.sort_indices()
    return _Compiled(q, A, b, cones, offsets, row_slices, rsoc_rows, ir.objective_constant)


def _merge_cones(cones: list[Cone]) -> list[Cone]:
    """Merge consecutive zero/nonneg cones to keep the backend cone list short."""
    out: list[Cone] = []
    for c in cones:
        if out and c.kind in ("zero", "nonneg") and out[-1].kind == c.kind:
            out[-1] = Cone(c.kind, out[-1].dim + c.dim)
        else:
            out.append(c)
    return out


def compiled_residual(comp: _Compiled, x: np.ndarray) -> float:
    """Largest cone violation of ``b - A x``, each cone scaled by the size of its terms."""
    s = comp.b - comp.A @ x
    Ax = abs(comp.A) @ np.abs(x)
    worst, k = 0.0, 0
    for c in comp.cones:
        seg = s[k:k + c.size]
        scale = 1.0 + max(float(np.max(np.abs(comp.b[k:k + c.size]), initial=0.0)),
                          float(np.max(np.abs(Ax[k:k + c.size]), initial=0.0)))
        worst = max(worst, cone_violation(c, seg) / scale)
        k += c.size
    return worst


def _solve_clarabel(comp: _Compiled, tol: Tolerances) -> SolveOutcome:
    import clarabel

    n = len(comp.q)
    P = sp.csc_matrix((n, n))
    ccones = []
    for c in _merge_cones(comp.cones):
        if c.kind == "zero":
            ccones.append(clarabel.ZeroConeT(c.dim))
        elif c.kind == "nonneg":
            ccones.append(clarabel.NonnegativeConeT(c.dim))
        elif c.kind == "soc":
            ccones.append(clarabel.SecondOrderConeT(c.dim))
        elif c.kind == "psd":
            ccones.append(clarabel.PSDTriangleConeT(c.dim))
        else:  # pragma: no cover - compile_ir only emits the kinds above
            raise IRError(c.kind)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = tol.solver_tol
    settings.tol_gap_rel = tol.solver_tol
    settings.tol_feas = tol.solver_tol
    settings.tol_ktratio = 1e-8
    settings.max_iter = tol.max_iter
    settings.max_threads = 1
    sol = clarabel.DefaultSolver(P, comp.q, comp.A, comp.b, ccones, settings).solve()

    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    for start, size in comp.rsoc_rows:
        z[start:start + size] = _rsoc_transform(size) @ z[start:start + size]
    duals = {label: z[sl].copy() for label, sl in comp.row_slices.items()}
    status_name = str(sol.status).split(".")[-1]
    return _finish(comp, tol, x, duals, status_name, float(sol.obj_val), float(sol.obj_val_dual),
                   int(sol.iterations), "clarabel")


def _finish(comp, tol, x, duals, status_name, pobj, dobj, iters, backend) -> SolveOutcome:
    values = {name: x[sl].copy() for name, sl in comp.block_slices.items()}
    if status_name in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveOutcome(SolveStatus.INFEASIBLE, values, np.inf, {}, duals, backend, iters, status_name)
    if status_name in ("DualInfeasible", "AlmostDualInfeasible"):
        return SolveOutcome(SolveStatus.UNBOUNDED, values, -np.inf, {}, duals, backend, iters, status_name)
    obj = float(comp.q @ x) + comp.constant
    res = {"primal": compiled_residual(comp, x),
           "gap": abs(pobj - dobj) / (1.0 + abs(pobj)) if np.isfinite(dobj) else np.nan}
    ok = status_name in ("Solved", "AlmostSolved", "optimal", "optimal_inaccurate")
    if ok and res["primal"] <= tol.primal_residual and not (res["gap"] > tol.relative_gap):
        status = SolveStatus.OPTIMAL
    else:
        status = SolveStatus.NUMERICAL_TROUBLE
    return SolveOutcome(status, values, obj, res, duals, backend, iters, status_name)


def _solve_cvxpy(comp: _Compiled, tol: Tolerances, solver: str) -> SolveOutcome:
    import cvxpy as cp

    n = len(comp.q)
    x = cp.Variable(n)
    s = comp.b - comp.A @ x
    cons, m = [], 0
    for c in comp.cones:
        seg = s[m:m + c.size]
        if c.kind == "zero":
            cons.append(seg == 0)
        elif c.kind == "nonneg":
            cons.append(seg >= 0)
        elif c.kind == "soc":
            cons.append(cp.SOC(seg[0], seg[1:]))
        elif c.kind == "psd":
            k = c.dim
            S = np.zeros((k * k, c.size))
            idx = 0
            for i in range(k):
                for j in range(i + 1):
                    f = 1.0 if i == j else 1 / SQRT2
                    S[i * k + j, idx] = f
                    S[j * k + i, idx] = f
                    idx += 1
            cons.append(cp.reshape(S @ seg, (k, k), order="C") >> 0)
        m += c.size
    prob = cp.Problem(cp.Minimize(comp.q @ x), cons)
    try:
        prob.solve(solver=solver)
    except cp.error.SolverError as exc:
        return SolveOutcome(SolveStatus.NUMERICAL_TROUBLE, {}, np.nan, {}, {}, f"cvxpy:{solver}", 0, str(exc))
    status_map = {"optimal": "optimal", "optimal_inaccurate": "optimal_inaccurate",
                  "infeasible": "PrimalInfeasible", "infeasible_inaccurate": "PrimalInfeasible",
                  "unbounded": "DualInfeasible", "unbounded_inaccurate": "DualInfeasible"}
    name = status_map.get(prob.status, prob.status)
    xv = np.zeros(n) if x.value is None else np.asarray(x.value, dtype=float)
    val = float(prob.value) if prob.value is not None else np.nan
    return _finish(comp, tol, xv, {}, name, val, val, 0, f"cvxpy:{solver}")


def solve_compiled(comp: _Compiled, tol: Tolerances | None = None, backend: str = "clarabel") -> SolveOutcome:
    """Solve an already compiled program; never raises on backend failure."""
    tol = tol or Tolerances.from_env()
    try:
        if backend == "clarabel":
            return _solve_clarabel(comp, tol)
        if backend.startswith("cvxpy"):
            _, _, solver = backend.partition(":")
            return _solve_cvxpy(comp, tol, solver or "CLARABEL")
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        if isinstance(exc, IRError):
            raise
        return SolveOutcome(SolveStatus.NUMERICAL_TROUBLE, {}, np.nan, {}, {}, backend, 0, repr(exc))
    raise ValueError(f"unknown backend {backend!r}")


def solve(ir: ConicProgramIR, tol: Tolerances | None = None, backend: str = "clarabel") -> SolveOutcome:
    """Solve ``ir``; never raises on backend failure (reports NUMERICAL_TROUBLE)."""
    return solve_compiled(compile_ir(ir), tol, backend)
