"""Cone algebra shared by ambiguity sets and conic programs.

Vector layouts are fixed so emitted programs are portable:

* ``soc(d)``: ``(t, x)`` with ``t >= ||x||``, ``d`` counts ``t``.
* ``rsoc(d)``: ``(u, v, w)`` with ``2*u*v >= ||w||**2`` and ``u, v >= 0``.
* ``psd(n)``: lower triangle of an ``n x n`` symmetric matrix, row-major,
  off-diagonal entries scaled by ``sqrt(2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SQRT2 = np.sqrt(2.0)

ATOMIC_KINDS = ("zero", "free", "nonneg", "soc", "rsoc", "psd")


@dataclass(frozen=True)
class Cone:
    kind: str
    dim: int = 0
    parts: tuple["Cone", ...] = field(default=())

    def __post_init__(self):
        if self.kind == "product":
            if not self.parts:
                raise ValueError("product cone needs at least one part")
        elif self.kind in ATOMIC_KINDS:
            if self.dim <= 0:
                raise ValueError(f"{self.kind} cone needs a positive dimension")
            if self.kind == "soc" and self.dim < 1:
                raise ValueError("second-order cone needs dim >= 1")
            if self.kind == "rsoc" and self.dim < 2:
                raise ValueError("rotated second-order cone needs dim >= 2")
        else:
            raise ValueError(f"unknown cone kind {self.kind!r}")

    @property
    def size(self) -> int:
        """Length of the vectors living in this cone."""
        if self.kind == "product":
            return sum(p.size for p in self.parts)
        if self.kind == "psd":
            return self.dim * (self.dim + 1) // 2
        return self.dim

    def flatten(self) -> list["Cone"]:
        if self.kind != "product":
            return [self]
        out: list[Cone] = []
        for p in self.parts:
            out.extend(p.flatten())
        return out

    def dual(self) -> "Cone":
        return dual_cone(self)

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return cone_violation(self, x) <= tol

    def to_json(self) -> dict:
        if self.kind == "product":
            return {"kind": "product", "parts": [p.to_json() for p in self.parts]}
        return {"kind": self.kind, "dim": self.dim}

    @staticmethod
    def from_json(obj: dict) -> "Cone":
        kind = obj["kind"]
        if kind == "product":
            return Cone("product", parts=tuple(Cone.from_json(p) for p in obj["parts"]))
        return Cone(kind, int(obj["dim"]))

    def __repr__(self):
        if self.kind == "product":
            return "Product(" + ", ".join(repr(p) for p in self.parts) + ")"
        return f"{self.kind}({self.dim})"


def Zero(d: int) -> Cone:
    return Cone("zero", d)


def Free(d: int) -> Cone:
    return Cone("free", d)


def NonNegative(d: int) -> Cone:
    return Cone("nonneg", d)


def SecondOrder(d: int) -> Cone:
    return Cone("soc", d)


def RotatedSecondOrder(d: int) -> Cone:
    return Cone("rsoc", d)


def PositiveSemidefinite(n: int) -> Cone:
    return Cone("psd", n)


def Product(*cones: Cone | Iterable[Cone]) -> Cone:
    flat: list[Cone] = []
    for c in cones:
        if isinstance(c, Cone):
            flat.extend(c.flatten())
        else:
            for cc in c:
                flat.extend(cc.flatten())
    if len(flat) == 1:
        return flat[0]
    return Cone("product", parts=tuple(flat))


_DUAL = {"zero": "free", "free": "zero", "nonneg": "nonneg", "soc": "soc",
         "rsoc": "rsoc", "psd": "psd"}


def dual_cone(c: Cone) -> Cone:
    if c.kind == "product":
        return Cone("product", parts=tuple(dual_cone(p) for p in c.parts))
    return Cone(_DUAL[c.kind], c.dim)


def svec(M: np.ndarray) -> np.ndarray:
    """Scaled lower-triangular vectorization of a symmetric matrix."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    out = []
    for i in range(n):
        for j in range(i + 1):
            out.append(M[i, j] if i == j else SQRT2 * M[i, j])
    return np.array(out)


def smat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = int(round((np.sqrt(8 * len(v) + 1) - 1) / 2))
    M = np.zeros((n, n))
    k = 0
    for i in range(n):
        for j in range(i + 1):
            if i == j:
                M[i, i] = v[k]
            else:
                M[i, j] = M[j, i] = v[k] / SQRT2
            k += 1
    return M


def svec_index(n: int, i: int, j: int) -> int:
    """Position of entry (i, j) of an n x n matrix inside ``svec``."""
    if j > i:
        i, j = j, i
    return i * (i + 1) // 2 + j


def cone_violation(c: Cone, x: np.ndarray) -> float:
    """Distance-like measure of how far ``x`` is from ``c`` (0 when inside)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (c.size,):
        raise ValueError(f"vector of length {x.shape} does not match cone size {c.size}")
    if c.kind == "product":
        worst, k = 0.0, 0
        for p in c.parts:
            worst = max(worst, cone_violation(p, x[k:k + p.size]))
            k += p.size
        return worst
    if c.kind == "free":
        return 0.0
    if c.kind == "zero":
        return float(np.max(np.abs(x)))
    if c.kind == "nonneg":
        return float(max(0.0, -np.min(x)))
    if c.kind == "soc":
        return float(max(0.0, np.linalg.norm(x[1:]) - x[0]))
    if c.kind == "rsoc":
        u, v, w = x[0], x[1], x[2:]
        return float(max(0.0, np.linalg.norm(np.r_[u - v, SQRT2 * w]) - (u + v)) / SQRT2)
    if c.kind == "psd":
        return float(max(0.0, -np.linalg.eigvalsh(smat(x))[0]))
    raise AssertionError(c.kind)


def sample_cone(c: Cone, rng: np.random.Generator) -> np.ndarray:
    """Draw a random point of ``c`` (used by property tests and samplers)."""
    if c.kind == "product":
        return np.concatenate([sample_cone(p, rng) for p in c.parts])
    if c.kind == "zero":
        return np.zeros(c.dim)
    if c.kind == "free":
        return rng.normal(size=c.dim)
    if c.kind == "nonneg":
        return rng.exponential(size=c.dim)
    if c.kind == "soc":
        x = rng.normal(size=c.dim - 1)
        return np.r_[np.linalg.norm(x) + rng.exponential(), x]
    if c.kind == "rsoc":
        w = rng.normal(size=c.dim - 2)
        u = rng.exponential() + 0.1
        v = (w @ w) / (2 * u) + rng.exponential()
        return np.r_[u, v, w]
    if c.kind == "psd":
        L = rng.normal(size=(c.dim, c.dim))
        return svec(L @ L.T)
    raise AssertionError(c.kind)


def concat_cones(cones: Sequence[Cone]) -> Cone:
    return Product(*cones)
