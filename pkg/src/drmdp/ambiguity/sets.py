"""Standard-form ambiguity sets over one state's parameters.

The random parameter vector of a state is ``x = (p, r, u)``: the transition
probabilities (one block of successor probabilities per action), the
rewards (one per action) and ``Q`` auxiliary coordinates used by lifted
constraints.  An ambiguity set is described by

* moment equalities ``E[F p + G r + H u] = c``;
* confidence sets ``O_i = {x : b_i - B_i p - D_i r - E_i u in K_i}`` with
  probability bounds ``lo_i <= mu(O_i) <= hi_i``.

The last set is the support (root): its bounds are ``[1, 1]``.  Every other
set has a parent, the smallest set strictly containing it; sets without an
ancestor relation must be disjoint.  The simplex constraints on ``p`` are
conjoined into the root on construction so every admissible parameter is a
valid transition law.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..cones import Cone, NonNegative, Product, Zero


class AmbiguityError(ValueError):
    pass


def _mat(M, rows: int, cols: int, what: str) -> np.ndarray:
    if M is None:
        return np.zeros((rows, cols))
    M = np.asarray(M, dtype=float)
    if M.size == 0 and rows * cols == 0:
        return np.zeros((rows, cols))
    M = np.atleast_2d(M)
    if M.shape != (rows, cols):
        raise AmbiguityError(f"{what} has shape {M.shape}, expected {(rows, cols)}")
    return M


@dataclass(frozen=True)
class ConfidenceSet:
    """``{(p, r, u) : b - B p - D r - E u in cone}`` with probability bounds."""

    B: np.ndarray
    D: np.ndarray
    E: np.ndarray
    b: np.ndarray
    cone: Cone
    prob_lo: float
    prob_hi: float
    parent: int | None = None
    # optional (lo, hi) bounding box over (p, r, u) when the set is exactly a box
    box: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.prob_lo <= self.prob_hi <= 1.0):
            raise AmbiguityError(f"probability bounds [{self.prob_lo}, {self.prob_hi}] are invalid")
        L = len(self.b)
        if self.cone.size != L:
            raise AmbiguityError(f"cone size {self.cone.size} does not match {L} rows")
        for name in ("B", "D", "E"):
            if getattr(self, name).shape[0] != L:
                raise AmbiguityError(f"{name} must have {L} rows")

    @property
    def rows(self) -> int:
        return len(self.b)

    @property
    def M(self) -> np.ndarray:
        return np.hstack([self.B, self.D, self.E])

    @property
    def degenerate(self) -> bool:
        return self.prob_lo == self.prob_hi

    def slack(self, x: np.ndarray) -> np.ndarray:
        return self.b - self.M @ x

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return self.cone.contains(self.slack(x), tol)

    def with_bounds(self, lo: float, hi: float, parent: int | None = None) -> "ConfidenceSet":
        return ConfidenceSet(self.B, self.D, self.E, self.b, self.cone, lo, hi, parent, self.box)

    def to_json(self) -> dict:
        def m(A):
            return {"shape": list(A.shape), "data": [float(v) for v in A.ravel()]}

        out = {"B": m(self.B), "D": m(self.D), "E": m(self.E), "b": [float(v) for v in self.b],
               "cone": self.cone.to_json(), "prob_lo": self.prob_lo, "prob_hi": self.prob_hi,
               "parent": self.parent}
        if self.box is not None:
            out["box"] = [[float(v) for v in self.box[0]], [float(v) for v in self.box[1]]]
        return out


def make_set(n_p: int, n_r: int, Q: int, b, cone: Cone, B=None, D=None, E=None,
             prob_lo: float = 1.0, prob_hi: float = 1.0, parent: int | None = None,
             box=None) -> ConfidenceSet:
    b = np.atleast_1d(np.asarray(b, dtype=float))
    L = len(b)
    return ConfidenceSet(_mat(B, L, n_p, "B"), _mat(D, L, n_r, "D"), _mat(E, L, Q, "E"),
                         b, cone, float(prob_lo), float(prob_hi), parent, box)


def box_set(lo, hi, n_p: int, n_r: int, Q: int = 0, prob_lo: float = 1.0, prob_hi: float = 1.0,
            parent: int | None = None) -> ConfidenceSet:
    """Axis-aligned box over ``(p, r, u)``; coordinates with ``lo == hi`` are pinned.

    Infinite bounds are allowed and simply omitted.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    N = n_p + n_r + Q
    if lo.shape != (N,) or hi.shape != (N,):
        raise AmbiguityError(f"box bounds must have length {N}")
    if np.any(lo > hi):
        raise AmbiguityError("box lower bound exceeds upper bound")
    eq_rows, eq_rhs, in_rows, in_rhs = [], [], [], []
    for j in range(N):
        e = np.zeros(N)
        e[j] = 1.0
        if lo[j] == hi[j]:
            eq_rows.append(e)
            eq_rhs.append(lo[j])
            continue
        if np.isfinite(hi[j]):      # hi - x >= 0
            in_rows.append(e)
            in_rhs.append(hi[j])
        if np.isfinite(lo[j]):      # x - lo >= 0
            in_rows.append(-e)
            in_rhs.append(-lo[j])
    rows = eq_rows + in_rows
    if not rows:
        raise AmbiguityError("box has no finite bounds")
    cones = []
    if eq_rows:
        cones.append(Zero(len(eq_rows)))
    if in_rows:
        cones.append(NonNegative(len(in_rows)))
    M = np.array(rows)
    return ConfidenceSet(M[:, :n_p], M[:, n_p:n_p + n_r], M[:, n_p + n_r:], np.array(eq_rhs + in_rhs),
                         Product(*cones), float(prob_lo), float(prob_hi), parent, (lo.copy(), hi.copy()))


def intersect(a: ConfidenceSet, b: ConfidenceSet) -> tuple[np.ndarray, np.ndarray, Cone]:
    """Stacked ``(M, rhs, cone)`` describing ``a`` and ``b`` together."""
    return (np.vstack([a.M, b.M]), np.concatenate([a.b, b.b]), Product(a.cone, b.cone))


@dataclass(frozen=True)
class MomentConstraints:
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    c: np.ndarray

    @property
    def k(self) -> int:
        return len(self.c)

    @property
    def M(self) -> np.ndarray:
        return np.hstack([self.F, self.G, self.H])

    @staticmethod
    def empty(n_p: int, n_r: int, Q: int) -> "MomentConstraints":
        return MomentConstraints(np.zeros((0, n_p)), np.zeros((0, n_r)), np.zeros((0, Q)), np.zeros(0))

    @staticmethod
    def make(n_p: int, n_r: int, Q: int, c, F=None, G=None, H=None) -> "MomentConstraints":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        k = len(c)
        return MomentConstraints(_mat(F, k, n_p, "F"), _mat(G, k, n_r, "G"), _mat(H, k, Q, "H"), c)


class AmbiguitySet:
    """Ambiguity set of one state (see module docstring).

    Sets are indexed from 0 internally; the root is the last one.  A set
    whose ``parent`` is ``None`` hangs directly under the root.
    """

    def __init__(self, n_actions: int, n_succ: int, sets: Sequence[ConfidenceSet],
                 moments: MomentConstraints | None = None, Q: int = 0, state=None,
                 conjoin_simplex: bool = True):
        if not sets:
            raise AmbiguityError("an ambiguity set needs at least its support set")
        self.n_actions = int(n_actions)
        self.n_succ = int(n_succ)
        self.Q = int(Q)
        self.state = state
        n_p, n_r = self.n_p, self.n_r
        self.moments = moments if moments is not None else MomentConstraints.empty(n_p, n_r, self.Q)
        if self.moments.M.shape != (self.moments.k, self.dim):
            raise AmbiguityError(f"moment matrices must have {self.dim} columns")
        for i, s in enumerate(sets):
            if s.M.shape[1] != self.dim:
                raise AmbiguityError(f"set {i} has {s.M.shape[1]} columns, expected {self.dim}")
        root = sets[-1]
        if not (root.prob_lo == 1.0 and root.prob_hi == 1.0):
            raise AmbiguityError("the support set must carry probability bounds [1, 1]")
        self._raw_root = root
        if conjoin_simplex and n_p > 0:
            root = self._with_simplex(root)
        self.sets: list[ConfidenceSet] = list(sets[:-1]) + [root]
        n = len(self.sets)
        self.parent: list[int | None] = []
        for i, s in enumerate(self.sets):
            if i == n - 1:
                self.parent.append(None)
                continue
            p = n - 1 if s.parent is None else int(s.parent)
            if not (0 <= p < n) or p == i:
                raise AmbiguityError(f"set {i} has invalid parent {s.parent}")
            self.parent.append(p)
        # acyclicity: every chain must reach the root
        for i in range(n):
            seen, j = set(), i
            while j is not None:
                if j in seen:
                    raise AmbiguityError(f"nesting forest has a cycle through set {i}")
                seen.add(j)
                j = self.parent[j]
            if n - 1 not in seen:
                raise AmbiguityError(f"set {i} is not below the support set")
        self._certificate = None

    # dimensions -----------------------------------------------------------
    @property
    def n_p(self) -> int:
        return self.n_actions * self.n_succ

    @property
    def n_r(self) -> int:
        return self.n_actions

    @property
    def dim(self) -> int:
        return self.n_p + self.n_r + self.Q

    @property
    def n_sets(self) -> int:
        return len(self.sets)

    @property
    def root(self) -> int:
        return len(self.sets) - 1

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return x[:self.n_p], x[self.n_p:self.n_p + self.n_r], x[self.n_p + self.n_r:]

    def _with_simplex(self, root: ConfidenceSet) -> ConfidenceSet:
        n_p, na, ns = self.n_p, self.n_actions, self.n_succ
        S = np.zeros((na, n_p))
        for a in range(na):
            S[a, a * ns:(a + 1) * ns] = 1.0
        Bs = np.vstack([S, -np.eye(n_p)])
        bs = np.concatenate([np.ones(na), np.zeros(n_p)])
        L = len(bs)
        B = np.vstack([root.B, Bs])
        D = np.vstack([root.D, np.zeros((L, self.n_r))])
        E = np.vstack([root.E, np.zeros((L, self.Q))])
        cone = Product(root.cone, Zero(na), NonNegative(n_p))
        return ConfidenceSet(B, D, E, np.concatenate([root.b, bs]), cone, 1.0, 1.0, None, root.box)

    # structure ------------------------------------------------------------
    def ancestors(self, i: int) -> list[int]:
        """``i`` together with every set strictly containing it, root last."""
        if not 0 <= i < self.n_sets:
            raise AmbiguityError(f"unknown confidence set index {i}")
        out = [i]
        while self.parent[out[-1]] is not None:
            out.append(self.parent[out[-1]])
        return out

    def children(self, i: int) -> list[int]:
        return [j for j in range(self.n_sets) if self.parent[j] == i]

    def comparable(self, i: int, j: int) -> bool:
        return i in self.ancestors(j) or j in self.ancestors(i)

    def effective(self, i: int) -> tuple[np.ndarray, np.ndarray, Cone]:
        """``O_i`` intersected with the support, as ``(M, rhs, cone)``.

        Distributions are supported on the root, so ``O_i`` and
        ``O_i ∩ O_root`` carry the same mass; the intersected form keeps the
        dual program bounded when a set constrains only some coordinates.
        """
        s = self.sets[i]
        if i == self.root:
            return s.M, s.b, s.cone
        return intersect(s, self.sets[self.root])

    def effective_blocks(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, Cone]:
        M, b, cone = self.effective(i)
        n_p, n_r = self.n_p, self.n_r
        return M[:, :n_p], M[:, n_p:n_p + n_r], M[:, n_p + n_r:], b, cone

    def contains(self, i: int, x: np.ndarray, tol: float = 1e-9) -> bool:
        M, b, cone = self.effective(i)
        return cone.contains(b - M @ x, tol)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([s.prob_lo for s in self.sets])
        hi = np.array([s.prob_hi for s in self.sets])
        return lo, hi

    def digest(self) -> str:
        """Content hash used to cache verification results."""
        h = hashlib.sha1()
        h.update(np.array([self.n_actions, self.n_succ, self.Q], dtype=np.int64).tobytes())
        for A in (self.moments.M, self.moments.c):
            h.update(np.ascontiguousarray(A, dtype=float).tobytes())
        for s, par in zip(self.sets, self.parent):
            h.update(np.ascontiguousarray(s.M).tobytes())
            h.update(s.b.tobytes())
            h.update(repr(s.cone).encode())
            h.update(np.array([s.prob_lo, s.prob_hi, -1 if par is None else par]).tobytes())
        return h.hexdigest()

    # distributions ----------------------------------------------------------
    def distribution_feasible(self, points: np.ndarray, weights: np.ndarray, tol: float = 1e-7) -> bool:
        """Check a finitely supported distribution against every constraint."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(weights, dtype=float)
        if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
            return False
        if not all(self.contains(self.root, x, tol) for x in points):
            return False
        if self.moments.k:
            mean = w @ points
            if np.max(np.abs(self.moments.M @ mean - self.moments.c)) > tol * (1 + np.abs(self.moments.c).max()):
                return False
        for i, s in enumerate(self.sets):
            mass = sum(wk for wk, x in zip(w, points) if s.contains(x, tol))
            if mass < s.prob_lo - tol or mass > s.prob_hi + tol:
                return False
        return True

    # serialization ----------------------------------------------------------
    def to_json(self) -> dict:
        mom = self.moments

        def m(A):
            return {"shape": list(A.shape), "data": [float(v) for v in A.ravel()]}

        sets = [s.to_json() for s in self.sets[:-1]] + [self._raw_root.to_json()]
        for j, (s, par) in enumerate(zip(sets, self.parent)):
            s["parent"] = par
        return {"n_actions": self.n_actions, "n_succ": self.n_succ, "Q": self.Q,
                "moments": {"F": m(mom.F), "G": m(mom.G), "H": m(mom.H), "c": [float(v) for v in mom.c]},
                "sets": sets}

    @classmethod
    def from_json(cls, obj: dict, state=None) -> "AmbiguitySet":
        na, ns, Q = int(obj["n_actions"]), int(obj["n_succ"]), int(obj.get("Q", 0))
        n_p, n_r = na * ns, na

        def m(d, rows, cols):
            if d is None:
                return np.zeros((rows, cols))
            return np.asarray(d["data"], dtype=float).reshape(d["shape"])

        mo = obj.get("moments") or {}
        c = np.asarray(mo.get("c", []), dtype=float)
        k = len(c)
        moments = MomentConstraints.make(n_p, n_r, Q, c, m(mo.get("F"), k, n_p), m(mo.get("G"), k, n_r),
                                         m(mo.get("H"), k, Q))
        sets = []
        for s in obj["sets"]:
            b = np.asarray(s["b"], dtype=float)
            L = len(b)
            box = None
            if "box" in s:
                box = (np.asarray(s["box"][0], dtype=float), np.asarray(s["box"][1], dtype=float))
            sets.append(make_set(n_p, n_r, Q, b, Cone.from_json(s["cone"]), m(s.get("B"), L, n_p),
                                 m(s.get("D"), L, n_r), m(s.get("E"), L, Q), s.get("prob_lo", 1.0),
                                 s.get("prob_hi", 1.0), s.get("parent"), box))
        return cls(na, ns, sets, moments, Q, state)

    def __repr__(self):
        return (f"AmbiguitySet(state={self.state!r}, actions={self.n_actions}, succ={self.n_succ}, "
                f"Q={self.Q}, sets={self.n_sets}, k={self.moments.k})")


# ---------------------------------------------------------------------------
# simple constructors


def point_vector(p0, r0) -> np.ndarray:
    p0 = np.asarray(p0, dtype=float)
    return np.concatenate([p0.ravel(), np.asarray(r0, dtype=float).ravel()])


def from_point(p0, r0, state=None) -> AmbiguitySet:
    """Point mass at ``(p0, r0)``; ``p0`` has one row per action."""
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    na = len(r0)
    p0 = np.asarray(p0, dtype=float).reshape(na, -1)
    ns = p0.shape[1]
    for row in p0:
        if np.any(row < -1e-9) or abs(row.sum() - 1.0) > 1e-9:
            raise AmbiguityError("nominal transition rows must be probability vectors")
    x = point_vector(p0, r0)
    return AmbiguitySet(na, ns, [box_set(x, x, na * ns, na)], state=state)


def from_support(n_actions: int, n_succ: int, support: ConfidenceSet, Q: int = 0,
                 moments: MomentConstraints | None = None, state=None) -> AmbiguitySet:
    """Classical robust set: only the support, with probability one."""
    return AmbiguitySet(n_actions, n_succ, [support.with_bounds(1.0, 1.0)], moments, Q, state)


def from_boxes(n_actions: int, n_succ: int, boxes: Sequence[tuple], state=None) -> AmbiguitySet:
    """Box confidence sets ``(lo, hi, prob_lo, prob_hi, parent)``; the last box is the support."""
    n_p, n_r = n_actions * n_succ, n_actions
    sets = [box_set(lo, hi, n_p, n_r, 0, a, b, par) for lo, hi, a, b, par in boxes]
    return AmbiguitySet(n_actions, n_succ, sets, state=state)
