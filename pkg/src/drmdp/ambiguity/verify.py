"""Structural and numerical checks of ambiguity sets.

Containment ``O_i ⋐ O_j`` is certified row by row: for every scalar row of
``O_j`` that is not an implicit equality on ``O_j`` we minimize its slack
over ``O_i`` and require a margin of at least ``STRICT_MARGIN``.  Rows that
are constant on ``O_j`` (pinned coordinates, simplex sums) must take the
same constant on ``O_i``; this is the relative-interior reading of strict
containment.  Second-order and semidefinite rows cannot be scalarized this
way, so they fall back to checking extreme points and are reported as not
analytically certified.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ..cones import Cone, NonNegative, smat
from ..conic import ConicProgramIR, SolveStatus, solve
from .sets import AmbiguityError, AmbiguitySet

STRICT_MARGIN = 1e-7
EQ_TOL = 1e-9
MEMBER_TOL = 1e-9


@dataclass
class VerificationReport:
    ok: bool
    mode: str
    edges: dict = field(default_factory=dict)      # (i, parent) -> margin or None
    disjoint: dict = field(default_factory=dict)   # (i, j) -> True / False
    problems: list = field(default_factory=list)
    analytic: bool = True

    def summary(self) -> str:
        if self.ok:
            return f"verified ({self.mode})"
        return "; ".join(self.problems)


@dataclass
class RegularityReport:
    certified: bool
    bounded: bool
    witness_points: np.ndarray | None = None
    witness_weights: np.ndarray | None = None
    margin: float = float("nan")
    problems: list = field(default_factory=list)

    def summary(self) -> str:
        if self.certified:
            return f"certified (margin {self.margin:.3g})"
        return "; ".join(self.problems) or "not certified"


# ---------------------------------------------------------------------------
# linear optimization over a conic set


def optimize_over(M: np.ndarray, b: np.ndarray, cone: Cone, direction: np.ndarray,
                  extra=None) -> tuple[SolveStatus, float, np.ndarray | None]:
    """Minimize ``direction @ x`` over ``{x : b - M x in cone}``.

    ``extra`` is an optional ``(M2, b2, cone2)`` conjoined to the set.
    """
    ir = ConicProgramIR()
    ir.add_block("x", M.shape[1])
    ir.add_membership("set", {"x": M}, b, cone)
    if extra is not None:
        ir.add_membership("extra", {"x": extra[0]}, extra[1], extra[2])
    ir.set_objective({"x": np.asarray(direction, dtype=float)})
    out = solve(ir)
    if out.status is SolveStatus.OPTIMAL:
        return out.status, out.objective, out.values["x"]
    if out.status is SolveStatus.UNBOUNDED:
        return out.status, -np.inf, None
    if out.status is SolveStatus.INFEASIBLE:
        return out.status, np.inf, None
    # fall back to an LP solver for polyhedral sets before giving up
    lp = _lp_fallback(M, b, cone, direction, extra)
    if lp is not None:
        return lp
    return out.status, np.nan, None


def _polyhedral_rows(M, b, cone):
    """Split a polyhedral membership into (A_eq, b_eq, A_ub, b_ub); None if not polyhedral."""
    A_eq, b_eq, A_ub, b_ub = [], [], [], []
    k = 0
    for part in cone.flatten():
        sl = slice(k, k + part.size)
        if part.kind == "zero":
            A_eq.append(M[sl])
            b_eq.append(b[sl])
        elif part.kind == "nonneg":
            A_ub.append(M[sl])
            b_ub.append(b[sl])
        elif part.kind != "free":
            return None
        k += part.size
    cat = lambda L, n: np.vstack(L) if L else np.zeros((0, n))
    n = M.shape[1]
    return cat(A_eq, n), (np.concatenate(b_eq) if b_eq else np.zeros(0)), cat(A_ub, n), \
        (np.concatenate(b_ub) if b_ub else np.zeros(0))


def _lp_fallback(M, b, cone, direction, extra):
    parts = [_polyhedral_rows(M, b, cone)]
    if extra is not None:
        parts.append(_polyhedral_rows(*extra))
    if any(p is None for p in parts):
        return None
    A_eq = np.vstack([p[0] for p in parts])
    b_eq = np.concatenate([p[1] for p in parts])
    A_ub = np.vstack([p[2] for p in parts])
    b_ub = np.concatenate([p[3] for p in parts])
    res = linprog(direction, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                  A_eq=A_eq if len(b_eq) else None, b_eq=b_eq if len(b_eq) else None,
                  bounds=(None, None), method="highs")
    if res.status == 0:
        return SolveStatus.OPTIMAL, float(res.fun), res.x
    if res.status == 2:
        return SolveStatus.INFEASIBLE, np.inf, None
    if res.status == 3:
        return SolveStatus.UNBOUNDED, -np.inf, None
    return None


def is_nonempty(M, b, cone) -> bool:
    status, _, _ = optimize_over(M, b, cone, np.zeros(M.shape[1]))
    return status is SolveStatus.OPTIMAL


def slack_violations(M: np.ndarray, b: np.ndarray, cone: Cone, X: np.ndarray) -> np.ndarray:
    """Cone violation of ``b - M x`` for every row ``x`` of ``X`` (vectorized)."""
    S = b[None, :] - X @ M.T
    worst = np.zeros(len(X))
    k = 0
    for part in cone.flatten():
        seg = S[:, k:k + part.size]
        if part.kind == "zero":
            v = np.max(np.abs(seg), axis=1)
        elif part.kind == "nonneg":
            v = np.maximum(0.0, -np.min(seg, axis=1))
        elif part.kind == "soc":
            v = np.maximum(0.0, np.linalg.norm(seg[:, 1:], axis=1) - seg[:, 0])
        elif part.kind == "rsoc":
            u, w, z = seg[:, 0], seg[:, 1], seg[:, 2:]
            d = np.sqrt((u - w) ** 2 + 2 * np.sum(z * z, axis=1))
            v = np.maximum(0.0, d - (u + w)) / np.sqrt(2.0)
        elif part.kind == "psd":
            mats = np.array([smat(row) for row in seg])
            v = np.maximum(0.0, -np.linalg.eigvalsh(mats)[:, 0])
        else:
            v = np.zeros(len(X))
        worst = np.maximum(worst, v)
        k += part.size
    return worst


# ---------------------------------------------------------------------------
# nesting


def _scalar_rows(cone: Cone):
    """Yield (start, size, kind) for each atomic part of ``cone``."""
    k = 0
    for part in cone.flatten():
        yield k, part.size, part.kind, part
        k += part.size


def _range_over(target, row_M, row_b):
    M, b, cone = target
    st1, v1, _ = optimize_over(M, b, cone, -row_M)     # min of -row_M x -> max of row_M x
    st2, v2, _ = optimize_over(M, b, cone, row_M)      # min of row_M x
    if st1 is SolveStatus.INFEASIBLE or st2 is SolveStatus.INFEASIBLE:
        return np.nan, np.nan
    max_rowx = -v1 if st1 is SolveStatus.OPTIMAL else np.inf
    min_rowx = v2 if st2 is SolveStatus.OPTIMAL else -np.inf
    # slack = row_b - row_M x
    return row_b - max_rowx, row_b - min_rowx


def extreme_points(M, b, cone, n_random: int = 0, rng=None, radius: float | None = None) -> np.ndarray:
    """Points of the set found by optimizing along +-e_j and random directions.

    With ``radius`` the set is first intersected with the box ``|x_j| <= radius``.
    """
    N = M.shape[1]
    extra = None
    if radius is not None:
        extra = (np.vstack([np.eye(N), -np.eye(N)]), np.full(2 * N, float(radius)), NonNegative(2 * N))
    dirs = [s * e for e in np.eye(N) for s in (1.0, -1.0)]
    if n_random:
        rng = rng or np.random.default_rng(0)
        dirs += list(rng.normal(size=(n_random, N)))
    pts = []
    for d in dirs:
        st, _, x = optimize_over(M, b, cone, d, extra)
        if st is SolveStatus.OPTIMAL and x is not None:
            pts.append(x)
    if not pts:
        return np.zeros((0, N))
    P = np.array(pts)
    # drop near duplicates
    _, idx = np.unique(np.round(P, 9), axis=0, return_index=True)
    return P[np.sort(idx)]


def verify_nesting(amb: AmbiguitySet, mode: str = "optimize", n_samples: int = 1000,
                   seed: int = 0) -> VerificationReport:
    """Check the declared forest of ``amb``.

    ``mode`` is ``"declared"`` (structure only), ``"optimize"`` (certificates
    by optimization) or ``"sample"`` (empirical check with ``n_samples``
    points per set).
    """
    rep = VerificationReport(ok=True, mode=mode)
    n = amb.n_sets
    root = amb.sets[amb.root]
    if root.prob_lo != 1.0 or root.prob_hi != 1.0:
        rep.problems.append("support set does not have probability one")
    for i in range(n):
        if amb.sets[i].prob_lo > amb.sets[i].prob_hi:
            rep.problems.append(f"set {i}: lower bound exceeds upper bound")
    if mode == "declared":
        rep.ok = not rep.problems
        return rep
    for i in range(n):
        if not is_nonempty(*amb.effective(i)):
            rep.problems.append(f"set {i} is empty")
    if rep.problems:
        rep.ok = False
        return rep
    if mode == "optimize":
        _verify_optimize(amb, rep)
    elif mode == "sample":
        _verify_sample(amb, rep, n_samples, seed)
    else:
        raise ValueError(f"unknown verification mode {mode!r}")
    rep.ok = not rep.problems
    return rep


def _verify_optimize(amb: AmbiguitySet, rep: VerificationReport):
    n = amb.n_sets
    for i in range(n - 1):
        j = amb.parent[i]
        child = amb.effective(i)
        s = amb.sets[j]
        parent = amb.effective(j)
        margin = np.inf
        failed = None
        for start, size, kind, part in _scalar_rows(s.cone):
            if kind == "free":
                continue
            if kind in ("zero", "nonneg"):
                for r in range(start, start + size):
                    plo, phi = _range_over(parent, s.M[r], s.b[r])
                    clo, chi = _range_over(child, s.M[r], s.b[r])
                    if kind == "zero" or phi - plo <= EQ_TOL:
                        const = 0.0 if kind == "zero" else 0.5 * (plo + phi)
                        if not (abs(clo - const) <= 1e-8 and abs(chi - const) <= 1e-8):
                            failed = f"row {r} of set {j} is constant on it but varies on set {i}"
                            break
                        continue
                    if not clo >= STRICT_MARGIN:
                        failed = f"set {i} reaches the boundary of set {j} (row {r}, margin {clo:.3g})"
                        break
                    margin = min(margin, clo)
            else:
                # conic rows: check the child's extreme points against the open cone
                rep.analytic = False
                pts = extreme_points(*child, n_random=4 * amb.dim)
                seg_M, seg_b = s.M[start:start + size], s.b[start:start + size]
                depth = _interior_depth(part, seg_b[None, :] - pts @ seg_M.T)
                if np.min(depth) < STRICT_MARGIN:
                    failed = f"set {i} reaches the conic boundary of set {j}"
                else:
                    margin = min(margin, float(np.min(depth)))
            if failed:
                break
        rep.edges[(i, j)] = None if failed else margin
        if failed:
            rep.problems.append(failed)
    for i in range(n):
        for j in range(i + 1, n):
            if amb.comparable(i, j):
                continue
            Mi, bi, ci = amb.sets[i].M, amb.sets[i].b, amb.sets[i].cone
            st, _, _ = optimize_over(Mi, bi, ci, np.zeros(amb.dim), amb.effective(j))
            disjoint = st is SolveStatus.INFEASIBLE
            rep.disjoint[(i, j)] = disjoint
            if not disjoint:
                rep.problems.append(f"sets {i} and {j} are incomparable but intersect")


def _interior_depth(cone: Cone, S: np.ndarray) -> np.ndarray:
    """How deep each slack row of ``S`` lies inside ``cone`` (negative when outside)."""
    if cone.kind == "soc":
        return S[:, 0] - np.linalg.norm(S[:, 1:], axis=1)
    if cone.kind == "rsoc":
        u, w, z = S[:, 0], S[:, 1], S[:, 2:]
        return ((u + w) - np.sqrt((u - w) ** 2 + 2 * np.sum(z * z, axis=1))) / np.sqrt(2.0)
    if cone.kind == "psd":
        return np.linalg.eigvalsh(np.array([smat(row) for row in S]))[:, 0]
    raise AssertionError(cone.kind)


def sample_points(amb: AmbiguitySet, i: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Random points of the effective set ``i`` (mixtures of its extreme points)."""
    M, b, cone = amb.effective(i)
    E = extreme_points(M, b, cone, n_random=4 * amb.dim, rng=rng)
    if len(E) == 0:
        return E
    W = rng.dirichlet(np.full(len(E), 0.3), size=n)
    X = W @ E
    # include the extreme points themselves, they probe the boundary
    X[:min(n, len(E))] = E[:min(n, len(E))]
    return X


def _verify_sample(amb: AmbiguitySet, rep: VerificationReport, n_samples: int, seed: int):
    rng = np.random.default_rng(seed)
    samples = [sample_points(amb, i, n_samples, rng) for i in range(amb.n_sets)]
    rep.analytic = False
    for i in range(amb.n_sets - 1):
        j = amb.parent[i]
        s = amb.sets[j]
        viol = slack_violations(s.M, s.b, s.cone, samples[i])
        bad = int(np.sum(viol > MEMBER_TOL))
        rep.edges[(i, j)] = None if bad else 0.0
        if bad:
            rep.problems.append(f"{bad} sampled points of set {i} fall outside set {j}")
    for i in range(amb.n_sets):
        for j in range(i + 1, amb.n_sets):
            if amb.comparable(i, j):
                continue
            sj = amb.sets[j]
            hits = int(np.sum(slack_violations(sj.M, sj.b, sj.cone, samples[i]) <= MEMBER_TOL))
            si = amb.sets[i]
            hits += int(np.sum(slack_violations(si.M, si.b, si.cone, samples[j]) <= MEMBER_TOL))
            rep.disjoint[(i, j)] = hits == 0
            if hits:
                rep.problems.append(f"sets {i} and {j} share {hits} sampled points")


# ---------------------------------------------------------------------------
# regularity


def check_bounded(amb: AmbiguitySet) -> tuple[bool, np.ndarray]:
    """Bounding box of the support over the (p, r) coordinates.

    Auxiliary coordinates of lifted sets are not required to be bounded:
    they only enter through moment constraints.
    """
    M, b, cone = amb.effective(amb.root)
    n = amb.n_p + amb.n_r
    box = np.zeros((n, 2))
    ok = True
    for j in range(n):
        e = np.zeros(amb.dim)
        e[j] = 1.0
        st1, v1, _ = optimize_over(M, b, cone, e)
        st2, v2, _ = optimize_over(M, b, cone, -e)
        if st1 is not SolveStatus.OPTIMAL or st2 is not SolveStatus.OPTIMAL:
            ok = False
            box[j] = (-np.inf, np.inf)
        else:
            box[j] = (v1, -v2)
    return ok, box


def check_regularity(amb: AmbiguitySet, n_random: int = 8, seed: int = 0) -> RegularityReport:
    """Boundedness of the support and a strictly feasible witness distribution.

    The witness is a finite mixture of points of the sets.  Masses are found
    by an LP that maximizes the smallest gap between each non-degenerate
    probability interval and the mass it receives, under the moment
    equalities.
    """
    rep = RegularityReport(certified=False, bounded=False)
    root = amb.sets[amb.root]
    if root.prob_lo != 1.0 or root.prob_hi != 1.0:
        rep.problems.append("support set must have probability bounds [1, 1]")
        return rep
    rep.bounded, box = check_bounded(amb)
    if not rep.bounded:
        rep.problems.append("support set is unbounded in the transition/reward coordinates")
        return rep
    scale = 1.0 + float(np.max(np.abs(box[np.isfinite(box)]), initial=0.0))
    rng = np.random.default_rng(seed)
    pts = []
    for i in range(amb.n_sets):
        E = extreme_points(*amb.effective(i), n_random=n_random, rng=rng, radius=1e3 * scale)
        if len(E):
            pts.append(E)
            pts.append(E.mean(axis=0, keepdims=True))
    X = np.vstack(pts)
    member = np.array([[amb.sets[i].contains(x, MEMBER_TOL) and amb.contains(amb.root, x, MEMBER_TOL)
                        for x in X] for i in range(amb.n_sets)], dtype=float)
    keep = member[amb.root] > 0
    X, member = X[keep], member[:, keep]
    K = len(X)
    # variables: masses m (K), margin tau
    c = np.zeros(K + 1)
    c[-1] = -1.0
    A_eq = [np.r_[np.ones(K), 0.0]]
    b_eq = [1.0]
    if amb.moments.k:
        MX = amb.moments.M @ X.T
        for row, rhs in zip(MX, amb.moments.c):
            A_eq.append(np.r_[row, 0.0])
            b_eq.append(rhs)
    A_ub, b_ub = [], []
    for i, s in enumerate(amb.sets):
        if i == amb.root:
            continue
        if s.degenerate:
            A_eq.append(np.r_[member[i], 0.0])
            b_eq.append(s.prob_lo)
        else:
            A_ub.append(np.r_[-member[i], 1.0])    # lo + tau <= mass
            b_ub.append(-s.prob_lo)
            A_ub.append(np.r_[member[i], 1.0])     # mass + tau <= hi
            b_ub.append(s.prob_hi)
    bounds = [(0, None)] * K + [(None, 1.0)]
    res = linprog(c, A_ub=np.array(A_ub) if A_ub else None, b_ub=np.array(b_ub) if b_ub else None,
                  A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=bounds, method="highs")
    if res.status != 0:
        rep.problems.append("no mixture of set points satisfies the moment and probability constraints")
        return rep
    tau = float(res.x[-1])
    rep.margin = tau
    w = np.clip(res.x[:K], 0.0, None)
    sel = w > 1e-12
    rep.witness_points, rep.witness_weights = X[sel], w[sel] / w[sel].sum()
    has_open = any(not s.degenerate for i, s in enumerate(amb.sets) if i != amb.root)
    if has_open and tau <= 1e-9:
        rep.problems.append("every admissible mixture puts boundary mass on some probability interval")
        return rep
    rep.certified = True
    return rep


@dataclass
class Certificate:
    nesting: VerificationReport
    regularity: RegularityReport

    @property
    def ok(self) -> bool:
        return self.nesting.ok and self.regularity.certified

    def summary(self) -> str:
        return f"nesting: {self.nesting.summary()}; regularity: {self.regularity.summary()}"


_CACHE: dict[str, Certificate] = {}


def certify(amb: AmbiguitySet, mode: str = "optimize") -> Certificate:
    """Nesting plus regularity, cached by content hash."""
    key = amb.digest() + mode
    cert = _CACHE.get(key)
    if cert is None:
        cert = Certificate(verify_nesting(amb, mode), check_regularity(amb))
        _CACHE[key] = cert
    return cert


def require_certified(amb: AmbiguitySet):
    cert = certify(amb)
    if not cert.ok:
        raise AmbiguityError(f"ambiguity set of state {amb.state!r} failed verification: {cert.summary()}")
    return cert
