"""Independent oracles for S-robust values on small polyhedral instances.

None of these use the conic solver.  Worst cases are searched over
distributions that put the mass of every region (a confidence set minus its
children) on vertices of that set; for polyhedral sets with strict nesting
this family attains the infimum, because the expectation is linear in the
parameters and each region's closure is its whole set.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lstsq, null_space
from scipy.optimize import linprog

from ..ambiguity import AmbiguitySet
from ..dp import UncertainMdp
from ..mdp import Policy

MAX_FREE_DIMS = 3
MAX_SETS = 3


class OracleError(ValueError):
    """Instance outside the class the oracle can enumerate."""


def _split_rows(M: np.ndarray, b: np.ndarray, cone):
    eq, ineq = [], []
    k = 0
    for part in cone.flatten():
        rows = list(range(k, k + part.size))
        if part.kind == "zero":
            eq += rows
        elif part.kind == "nonneg":
            ineq += rows
        elif part.kind != "free":
            raise OracleError(f"oracle handles polyhedral sets only, found a {part.kind} cone")
        k += part.size
    return M[eq], b[eq], M[ineq], b[ineq]


def polytope_vertices(M: np.ndarray, b: np.ndarray, cone, max_dims: int = MAX_FREE_DIMS,
                      tol: float = 1e-9) -> np.ndarray:
    """Vertices of ``{x : b - M x in cone}`` for Zero/NonNegative cones, by active-set enumeration."""
    Me, be, Mi, bi = _split_rows(M, b, cone)
    N = M.shape[1]
    if len(Me):
        x0 = lstsq(Me, be)[0]
        if np.max(np.abs(Me @ x0 - be), initial=0.0) > 1e-8 * (1 + np.max(np.abs(be))):
            return np.zeros((0, N))
        Z = null_space(Me)
    else:
        x0, Z = np.zeros(N), np.eye(N)
    d = Z.shape[1]
    if d > max_dims:
        raise OracleError(f"set has {d} free dimensions; the oracle enumerates at most {max_dims}")
    if d == 0:
        ok = np.all(bi - Mi @ x0 >= -tol * (1 + np.abs(bi)))
        return x0[None, :] if ok else np.zeros((0, N))
    A = Mi @ Z
    c = bi - Mi @ x0
    pts = []
    for rows in itertools.combinations(range(len(A)), d):
        S = A[list(rows)]
        if abs(np.linalg.det(S)) < 1e-12:
            continue
        y = np.linalg.solve(S, c[list(rows)])
        if np.all(A @ y <= c + tol * (1 + np.abs(c))):
            pts.append(x0 + Z @ y)
    if not pts:
        return np.zeros((0, N))
    P = np.array(pts)
    _, idx = np.unique(np.round(P, 9), axis=0, return_index=True)
    return P[np.sort(idx)]


def _gain_rows(amb: AmbiguitySet, V: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Row ``k`` holds the per-action payoff ``V^T p + r`` at point ``X[k]``."""
    n_p, n_r = amb.n_p, amb.n_r
    return X[:, :n_p] @ V + X[:, n_p:n_p + n_r]


@dataclass
class RegionModel:
    """Candidate points of each region and the subtree incidence of the forest."""

    points: list            # per set: array of candidate points (region vertices)
    subtree: np.ndarray     # subtree[i, j] = 1 if region j lies inside set i
    lo: np.ndarray
    hi: np.ndarray


def region_model(amb: AmbiguitySet) -> RegionModel:
    if amb.n_sets > MAX_SETS:
        raise OracleError(f"oracle handles at most {MAX_SETS} confidence sets")
    pts = []
    for i in range(amb.n_sets):
        V_i = polytope_vertices(*amb.effective(i))
        kids = amb.children(i)
        keep = [v for v in V_i if not any(amb.contains(j, v) for j in kids)]
        if not keep:
            raise OracleError(f"region of set {i} has no vertex outside its children (nesting not strict)")
        pts.append(np.array(keep))
    n = amb.n_sets
    sub = np.zeros((n, n))
    for j in range(n):
        for i in amb.ancestors(j):
            sub[i, j] = 1.0
    lo, hi = amb.bounds()
    return RegionModel(pts, sub, lo, hi)


def mass_grid(model: RegionModel, grid: int = 200, tol: float = 1e-12) -> np.ndarray:
    """Region mass vectors on the ``1/grid`` lattice that respect every probability interval."""
    n = len(model.points)
    combos = []
    for cuts in itertools.combinations(range(grid + n - 1), n - 1):
        edges = (-1,) + cuts + (grid + n - 1,)
        combos.append([edges[k + 1] - edges[k] - 1 for k in range(n)])
    m = np.array(combos, dtype=float) / grid
    sub = m @ model.subtree.T
    ok = np.all((sub >= model.lo - tol) & (sub <= model.hi + tol), axis=1)
    return m[ok]


def _moment_filter(amb: AmbiguitySet, model: RegionModel, masses: np.ndarray, grid: int):
    """Vertex choices per region and the mass vectors whose means meet the moment equalities."""
    mom = amb.moments
    choices = list(itertools.product(*[range(len(P)) for P in model.points]))
    out = []
    for ch in choices:
        X = np.array([model.points[i][k] for i, k in enumerate(ch)])
        lhs = masses @ (X @ mom.M.T)
        scale = 1.0 + np.max(np.abs(X @ mom.M.T), initial=0.0)
        ok = np.all(np.abs(lhs - mom.c) <= scale / grid, axis=1)
        if np.any(ok):
            out.append((X, masses[ok]))
    return out


def brute_force_worst_case(amb: AmbiguitySet, pi, V, grid: int = 200) -> float:
    """Smallest ``E[r @ pi + p @ V @ pi]`` over vertex-supported distributions with lattice masses.

    Without moment constraints every region puts its mass on its worst
    vertex.  With moment constraints each region uses a single vertex and
    mass vectors are filtered by the moment equalities at lattice
    resolution, so the result is then an upper bound on the true infimum.
    """
    model = region_model(amb)
    pi = np.asarray(pi, dtype=float)
    masses = mass_grid(model, grid)
    if not len(masses):
        raise OracleError("no lattice mass vector satisfies the probability intervals")
    if amb.moments.k == 0:
        best = np.array([np.min(_gain_rows(amb, V, P) @ pi) for P in model.points])
        return float(np.min(masses @ best))
    vals = [np.min(m @ (_gain_rows(amb, V, X) @ pi)) for X, m in _moment_filter(amb, model, masses, grid)]
    if not vals:
        raise OracleError("no vertex-supported lattice distribution meets the moment constraints")
    return float(min(vals))


def simplex_grid(n: int, step: int) -> np.ndarray:
    """All probability vectors of length ``n`` with entries in multiples of ``1/step``."""
    rows = []
    for cuts in itertools.combinations(range(step + n - 1), n - 1):
        edges = (-1,) + cuts + (step + n - 1,)
        rows.append([edges[k + 1] - edges[k] - 1 for k in range(n)])
    return np.array(rows, dtype=float) / step


def enumerate_srobust(amb: AmbiguitySet, V, grid: int = 200, policy_step: int | None = None):
    """S-robust value by brute force: policies on a simplex lattice against lattice worst cases.

    Returns ``(value, pi)``.  Without moment constraints the per-policy
    worst case is vectorized over the whole policy lattice.
    """
    na = amb.n_actions
    step = policy_step or (100 if na <= 2 else 40)
    Pis = simplex_grid(na, step)
    if amb.moments.k:
        vals = np.array([brute_force_worst_case(amb, p, V, grid) for p in Pis])
    else:
        model = region_model(amb)
        masses = mass_grid(model, grid)
        if not len(masses):
            raise OracleError("no lattice mass vector satisfies the probability intervals")
        best = np.stack([np.min(Pis @ _gain_rows(amb, V, P).T, axis=1) for P in model.points], axis=1)
        vals = np.min(best @ masses.T, axis=1)
    k = int(np.argmax(vals))
    return float(vals[k]), Pis[k]


def region_mass_lp(amb: AmbiguitySet, pi, V) -> float:
    """Exact worst case without moments: a linear program over region masses."""
    if amb.moments.k:
        raise OracleError("the region-mass program ignores moment constraints")
    model = region_model(amb)
    pi = np.asarray(pi, dtype=float)
    best = np.array([np.min(_gain_rows(amb, V, P) @ pi) for P in model.points])
    n = len(best)
    A_ub = np.vstack([model.subtree, -model.subtree])
    b_ub = np.concatenate([model.hi, -model.lo])
    res = linprog(best, A_ub=A_ub, b_ub=b_ub, A_eq=np.ones((1, n)), b_eq=[1.0],
                  bounds=[(0, None)] * n, method="highs")
    if res.status != 0:
        raise OracleError(f"region-mass program failed: {res.message}")
    return float(res.fun)


def two_point_value(amb: AmbiguitySet, pi, V) -> float:
    """Closed form for one inner set under the support.

    Nature puts the smallest admissible mass ``lo`` on the inner set's worst
    vertex and the rest on the support's worst vertex.
    """
    if amb.n_sets != 2 or amb.moments.k:
        raise OracleError("two-point formula needs exactly one inner set and no moments")
    pi = np.asarray(pi, dtype=float)
    m_in = np.min(_gain_rows(amb, V, polytope_vertices(*amb.effective(0))) @ pi)
    m_sup = np.min(_gain_rows(amb, V, polytope_vertices(*amb.effective(1))) @ pi)
    lo = amb.sets[0].prob_lo
    return float(lo * m_in + (1 - lo) * min(m_sup, m_in))


# ---------------------------------------------------------------------------
# classical robust MDP by vertex linear programs


def robust_vertex_backup(amb: AmbiguitySet, V) -> tuple[float, np.ndarray]:
    """``max_pi min_{x in support} (r + V^T p) @ pi`` over the support's vertices."""
    if amb.n_sets != 1:
        raise OracleError("vertex backup applies to support-only ambiguity")
    X = polytope_vertices(*amb.effective(0), max_dims=amb.dim)
    G = _gain_rows(amb, V, X)
    na = amb.n_actions
    # variables (pi, t): maximize t s.t. t <= G pi
    c = np.r_[np.zeros(na), -1.0]
    A_ub = np.hstack([-G, np.ones((len(G), 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(len(G)), A_eq=np.r_[np.ones(na), 0.0][None, :], b_eq=[1.0],
                  bounds=[(0, None)] * na + [(None, None)], method="highs")
    if res.status != 0:
        raise OracleError(f"vertex program failed: {res.message}")
    return float(-res.fun), res.x[:na]


def robust_vertex_value_iteration(problem: UncertainMdp, eps: float = 1e-9, max_iter: int = 100000):
    """Value iteration with :func:`robust_vertex_backup`; returns ``(values, policy)``."""
    mdp = problem.mdp
    g = mdp.gamma
    v = np.zeros(mdp.n_states)
    rows = {}
    for _ in range(max_iter):
        nv = np.zeros_like(v)
        for s in mdp.states:
            if mdp.is_terminal(s):
                rows[s] = np.eye(mdp.n_actions(s))[0]
                continue
            val, pi = robust_vertex_backup(problem.ambiguity[s], mdp.continuation_matrix(s, v))
            nv[mdp.index[s]] = val
            rows[s] = pi
        done = np.max(np.abs(nv - v)) <= eps * (1 - g) / g if g < 1 else np.array_equal(nv, v)
        v = nv
        if done:
            break
    return v, Policy(rows)
