"""Per-state S-robust subproblem.

For a state with ambiguity set ``C`` and continuation matrix ``V`` (discount
folded in) the S-robust action solves

    max_{pi in simplex}  min_{mu in C}  E_mu[r @ pi + p @ V @ pi].

The inner minimization is a moment problem; its conic dual turns the whole
max-min into one conic program in ``(w, pi, beta, kappa, lam, nu_i)``:

    minimize    w
    subject to  c @ beta + hi @ kappa - lo @ lam <= w
                nu_i @ b_i - sum_{j in anc(i)} (kappa_j - lam_j) <= 0
                B_i' nu_i + V pi + F' beta = 0
                D_i' nu_i + pi + G' beta = 0
                E_i' nu_i + H' beta = 0
                pi in simplex,  kappa, lam >= 0,  nu_i in dual(K_i)

and the S-robust value is ``-w``.  Each set ``O_i`` enters through its
intersection with the support (see ``AmbiguitySet.effective``).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ambiguity import AmbiguityError, AmbiguitySet
from .ambiguity.verify import require_certified
from .cones import Cone, NonNegative, PositiveSemidefinite, RotatedSecondOrder, dual_cone, svec_index
from .conic import ConicProgramIR, SolveOutcome, SolveStatus, Tolerances, compile_ir, solve, solve_compiled

TIE_TOL = 1e-6


class SRobustError(RuntimeError):
    """The S-robust program could not be solved; ``reason`` names the failure."""

    def __init__(self, message: str, reason: str, status: SolveStatus | None = None):
        super().__init__(message)
        self.reason = reason
        self.status = status


@dataclass(frozen=True)
class SRobustInstance:
    amb: AmbiguitySet
    V: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.shape != (self.amb.n_p, self.amb.n_actions):
            raise AmbiguityError(f"continuation matrix has shape {V.shape}, "
                                 f"expected {(self.amb.n_p, self.amb.n_actions)}")

    @property
    def state(self):
        return self.amb.state


@dataclass
class SRobustSolution:
    policy: np.ndarray
    value: float
    duals: dict
    residuals: dict
    mean_p: np.ndarray | None = None
    mean_r: np.ndarray | None = None
    outcome: SolveOutcome | None = field(default=None, repr=False)

    def action(self, tol: float = TIE_TOL) -> int | None:
        """Lexicographically smallest action with weight >= 1 - tol, else None."""
        hits = np.nonzero(self.policy >= 1.0 - tol)[0]
        return int(hits[0]) if len(hits) else None


def build_program(inst: SRobustInstance, pi_fixed=None) -> ConicProgramIR:
    amb, V = inst.amb, np.asarray(inst.V, dtype=float)
    na, n = amb.n_actions, amb.n_sets
    mom = amb.moments
    lo, hi = amb.bounds()
    ir = ConicProgramIR()
    ir.add_block("w", 1)
    ir.add_block("pi", na, NonNegative(na))
    has_beta = mom.k > 0
    if has_beta:
        ir.add_block("beta", mom.k)
    ir.add_block("kappa", n, NonNegative(n))
    ir.add_block("lam", n, NonNegative(n))
    eff = [amb.effective_blocks(i) for i in range(n)]
    for i, (B, D, E, b, cone) in enumerate(eff):
        ir.add_block(f"nu{i}", len(b), dual_cone(cone))
    ir.set_objective({"w": np.ones(1)})

    ir.add_equality("simplex", {"pi": np.ones((1, na))}, 1.0)
    terms = {"w": -np.ones((1, 1)), "kappa": hi[None, :], "lam": -lo[None, :]}
    if has_beta:
        terms["beta"] = mom.c[None, :]
    ir.add_membership("budget", terms, 0.0, NonNegative(1))

    for i, (B, D, E, b, cone) in enumerate(eff):
        anc = np.zeros(n)
        anc[amb.ancestors(i)] = 1.0
        ir.add_membership(f"support{i}", {f"nu{i}": b[None, :], "kappa": -anc[None, :], "lam": anc[None, :]},
                          0.0, NonNegative(1))
        nu = f"nu{i}"
        if amb.n_p:
            t = {nu: B.T, "pi": V}
            if has_beta:
                t["beta"] = mom.F.T
            ir.add_equality(f"p{i}", t, np.zeros(amb.n_p))
        t = {nu: D.T, "pi": np.eye(na)}
        if has_beta:
            t["beta"] = mom.G.T
        ir.add_equality(f"r{i}", t, np.zeros(na))
        if amb.Q:
            t = {nu: E.T}
            if has_beta:
                t["beta"] = mom.H.T
            ir.add_equality(f"u{i}", t, np.zeros(amb.Q))
    if pi_fixed is not None:
        ir.add_equality("pi_fixed", {"pi": np.eye(na)}, np.asarray(pi_fixed, dtype=float))
    return ir


def _diagnose(out: SolveOutcome, state) -> SRobustError:
    if out.status is SolveStatus.INFEASIBLE:
        return SRobustError(f"S-robust program of state {state!r} is infeasible: the ambiguity set admits "
                            "no strictly feasible distribution (regularity violated)", "regularity",
                            out.status)
    if out.status is SolveStatus.UNBOUNDED:
        return SRobustError(f"S-robust program of state {state!r} is unbounded: the support set is "
                            "unbounded or empty", "support", out.status)
    return SRobustError(f"solver failure at state {state!r}: {out.message}", "solver", out.status)


def _recover_means(inst: SRobustInstance, out: SolveOutcome):
    """Worst-case expected parameters from the multipliers of the equality rows."""
    amb = inst.amb
    mp = np.zeros(amb.n_p)
    mr = np.zeros(amb.n_r)
    for i in range(amb.n_sets):
        if amb.n_p:
            mp -= out.duals.get(f"p{i}", 0.0)
        mr -= out.duals.get(f"r{i}", 0.0)
    return mp, mr


class SRobustTemplate:
    """Compiled S-robust program of one ambiguity set, re-solved for new continuation matrices.

    Only the ``V pi`` entries of the transition rows change between dynamic
    programming sweeps, so they are patched in place in the compiled matrix.
    """

    def __init__(self, amb: AmbiguitySet, pi_fixed=None):
        self.amb = amb
        na, ns = amb.n_actions, amb.n_succ
        pattern = np.zeros((amb.n_p, na))
        for a in range(na):
            pattern[a * ns:(a + 1) * ns, a] = 1.0
        self.rows, self.cols = np.nonzero(pattern)
        self.ir = build_program(SRobustInstance(amb, pattern), pi_fixed)
        self.comp = compile_ir(self.ir)
        c0 = self.comp.block_slices["pi"].start
        slots = []
        if amb.n_p:
            for i in range(amb.n_sets):
                r0 = self.comp.row_slices[f"p{i}"].start
                slots.append([self.comp.entry_index(r0 + k, c0 + a) for k, a in zip(self.rows, self.cols)])
        self.slots = np.array(slots, dtype=np.int64).reshape(len(slots), -1)

    def compiled(self, V: np.ndarray):
        A = self.comp.A.copy()
        vals = np.asarray(V, dtype=float)[self.rows, self.cols]
        for s in self.slots:
            A.data[s] = vals
        return replace(self.comp, A=A)

    def solve(self, V: np.ndarray, tol: Tolerances | None = None, backend: str = "clarabel") -> SolveOutcome:
        return solve_compiled(self.compiled(V), tol, backend)


def _template(amb: AmbiguitySet, pi_fixed) -> SRobustTemplate:
    cache = amb.__dict__.setdefault("_templates", {})
    key = None if pi_fixed is None else tuple(np.round(np.asarray(pi_fixed, dtype=float), 15))
    t = cache.get(key)
    if t is None:
        if len(cache) > 64:
            cache.clear()
        t = cache[key] = SRobustTemplate(amb, pi_fixed)
    return t


def _run(inst: SRobustInstance, pi_fixed, check: bool, tol: Tolerances | None,
         backend: str) -> SRobustSolution:
    if check:
        require_certified(inst.amb)
    out = _template(inst.amb, pi_fixed).solve(inst.V, tol, backend)
    if not out.optimal:
        raise _diagnose(out, inst.state)
    v = out.values
    pi = np.clip(v["pi"], 0.0, None)
    pi = pi / pi.sum()
    duals = {k: v[k] for k in v if k not in ("w", "pi")}
    mp = mr = None
    if out.duals:
        mp, mr = _recover_means(inst, out)
    return SRobustSolution(pi, -float(v["w"][0]), duals, out.residuals, mp, mr, out)


def solve_srobust(inst: SRobustInstance, check: bool = True, tol: Tolerances | None = None,
                  backend: str = "clarabel") -> SRobustSolution:
    """S-robust action and value of one state.

    With ``check`` the ambiguity set must pass nesting and regularity
    verification first (results are cached per set).
    """
    if inst.amb.n_actions == 1:
        return _run(inst, np.ones(1), check, tol, backend)
    return _run(inst, None, check, tol, backend)


def worst_case_value(inst: SRobustInstance, pi, check: bool = True, tol: Tolerances | None = None,
                     backend: str = "clarabel") -> SRobustSolution:
    """``min_mu E[r @ pi + p @ V @ pi]`` for a fixed action distribution."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (inst.amb.n_actions,) or np.any(pi < -1e-9) or abs(pi.sum() - 1.0) > 1e-9:
        raise ValueError("pi must be a probability vector over the actions")
    return _run(inst, pi, check, tol, backend)


def expected_return(inst: SRobustInstance, mean_p, mean_r, pi) -> float:
    return float(np.asarray(mean_r) @ pi + np.asarray(mean_p) @ inst.V @ pi)


def best_response_gap(inst: SRobustInstance, sol: SRobustSolution) -> float:
    """How much the best pure action beats ``sol.policy`` against the recovered worst-case means.

    Zero (up to solver accuracy) at a saddle point.
    """
    q = sol.mean_r + inst.V.T @ sol.mean_p
    return float(np.max(q) - q @ sol.policy)


# ---------------------------------------------------------------------------
# specialized programs for the lifted examples


def build_example_program(kind: str, data: dict, pi_fixed=None) -> ConicProgramIR:
    """Reduced conic program of a lifted ambiguity set.

    ``kind`` is one of ``mean``, ``mean_cov``, ``mad`` and ``huber``; ``data``
    carries the continuation matrix ``V`` and the parameters of the matching
    constructor in :mod:`drmdp.ambiguity.lifting`.  The optimal value ``w``
    satisfies ``value = -w``.
    """
    builders = {"mean": _prog_mean, "mean_cov": _prog_mean_cov, "mad": _prog_mad, "huber": _prog_huber}
    if kind not in builders:
        raise ValueError(f"unknown example kind {kind!r}")
    ir = builders[kind](data)
    if pi_fixed is not None:
        na = ir.block("pi").dim
        ir.add_equality("pi_fixed", {"pi": np.eye(na)}, np.asarray(pi_fixed, dtype=float))
    return ir


def _base(na: int) -> ConicProgramIR:
    ir = ConicProgramIR()
    ir.add_block("w", 1)
    ir.add_block("pi", na, NonNegative(na))
    ir.add_block("kappa", 1)
    ir.set_objective({"w": np.ones(1)})
    ir.add_equality("simplex", {"pi": np.ones((1, na))}, 1.0)
    return ir


def _prog_mean(d: dict) -> ConicProgramIR:
    """Transition mean constrained by ``G E[p] <=_K f``, rewards fixed at ``r0``."""
    V = np.asarray(d["V"], dtype=float)
    r0 = np.asarray(d["r0"], dtype=float)
    G = np.atleast_2d(np.asarray(d["G"], dtype=float))
    f = np.atleast_1d(np.asarray(d["f"], dtype=float))
    K: Cone = d["K"]
    n_p, na = V.shape
    ns = n_p // na
    S = np.zeros((na, n_p))
    for a in range(na):
        S[a, a * ns:(a + 1) * ns] = 1.0
    ir = _base(na)
    ir.add_block("nu", len(f), dual_cone(K))
    ir.add_block("theta", na)
    # w >= kappa + f @ nu
    ir.add_membership("objective", {"w": -np.ones((1, 1)), "kappa": np.ones((1, 1)), "nu": f[None, :]},
                      0.0, NonNegative(1))
    # kappa + r0 @ pi - 1 @ theta >= 0
    ir.add_membership("constant", {"kappa": -np.ones((1, 1)), "pi": -r0[None, :],
                                   "theta": np.ones((1, na))}, 0.0, NonNegative(1))
    # V pi + G' nu + S' theta >= 0
    ir.add_membership("transition", {"pi": -V, "nu": -G.T, "theta": -S.T}, np.zeros(n_p), NonNegative(n_p))
    return ir


def _prog_mean_cov(d: dict) -> ConicProgramIR:
    """Rewards with second moments ``E[(r - m0)(r - m0)'] <= Sigma``, transitions fixed at ``p0``.

    The mean is either pinned (``m``) or boxed by ``G_mean E[r] <= f_mean``.
    """
    V = np.asarray(d["V"], dtype=float)
    p0 = np.asarray(d["p0"], dtype=float).ravel()
    Sigma = np.atleast_2d(np.asarray(d["Sigma"], dtype=float))
    na = V.shape[1]
    m0 = np.asarray(d.get("m0", d.get("m")), dtype=float)
    pinned = d.get("m") is not None
    ir = _base(na)
    nY = na + 1
    ir.add_block("Y", nY * (nY + 1) // 2, PositiveSemidefinite(nY))
    if pinned:
        m = np.asarray(d["m"], dtype=float)
        ir.add_block("beta_m", na)
        lin_name, lin_map, lin_obj = "beta_m", np.eye(na), m
    else:
        Gm = np.atleast_2d(np.asarray(d["G_mean"], dtype=float))
        fm = np.asarray(d["f_mean"], dtype=float)
        ir.add_block("nu", len(fm), NonNegative(len(fm)))
        lin_name, lin_map, lin_obj = "nu", Gm.T, fm
    sY = nY * (nY + 1) // 2
    # objective: kappa + tr(Sigma Y22) + lin_obj @ lin <= w
    trace = np.zeros(sY)
    for i in range(na):
        for j in range(na):
            k = svec_index(nY, i + 1, j + 1)
            trace[k] += Sigma[i, j] * (1.0 if i == j else 1.0 / np.sqrt(2.0))
    ir.add_membership("objective", {"w": -np.ones((1, 1)), "kappa": np.ones((1, 1)), "Y": trace[None, :],
                                    lin_name: lin_obj[None, :]}, 0.0, NonNegative(1))
    # Y11 = kappa + p0 V pi + (lin_map lin + pi) @ m0
    row = {"Y": np.eye(sY)[svec_index(nY, 0, 0)][None, :], "kappa": -np.ones((1, 1)),
           "pi": -(p0 @ V + m0)[None, :], lin_name: -(m0 @ lin_map)[None, :]}
    ir.add_equality("corner", row, 0.0)
    # Y21 = (lin_map lin + pi) / 2, in svec scaling
    rows_Y = np.zeros((na, sY))
    for a in range(na):
        rows_Y[a, svec_index(nY, a + 1, 0)] = 1.0 / np.sqrt(2.0)
    ir.add_equality("offdiag", {"Y": rows_Y, "pi": -0.5 * np.eye(na), lin_name: -0.5 * lin_map}, np.zeros(na))
    return ir


def _prog_mad(d: dict) -> ConicProgramIR:
    """Rewards with ``E|r_a - m_a| <= f_a`` (optionally within ``[lo, hi]``), transitions at ``p0``."""
    V = np.asarray(d["V"], dtype=float)
    p0 = np.asarray(d["p0"], dtype=float).ravel()
    m = np.asarray(d["m"], dtype=float)
    f = np.asarray(d["f"], dtype=float)
    na = V.shape[1]
    ir = _base(na)
    ir.add_block("beta", na, NonNegative(na))
    ir.add_block("z", na)
    ir.add_membership("objective", {"w": -np.ones((1, 1)), "kappa": np.ones((1, 1)), "beta": f[None, :]},
                      0.0, NonNegative(1))
    ir.add_membership("constant", {"kappa": -np.ones((1, 1)), "pi": -(p0 @ V)[None, :],
                                   "z": -np.ones((1, na))}, 0.0, NonNegative(1))
    I = np.eye(na)
    ir.add_membership("at_mean", {"z": I, "pi": -np.diag(m)}, np.zeros(na), NonNegative(na))
    lo, hi = d.get("lo"), d.get("hi")
    if lo is None and hi is None:
        ir.add_membership("slope", {"beta": -I, "pi": I}, np.zeros(na), NonNegative(na))
    else:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        ir.add_membership("at_lo", {"z": I, "beta": -np.diag(m - lo), "pi": -np.diag(lo)}, np.zeros(na),
                          NonNegative(na))
        ir.add_membership("at_hi", {"z": I, "beta": -np.diag(hi - m), "pi": -np.diag(hi)}, np.zeros(na),
                          NonNegative(na))
    return ir


def _prog_huber(d: dict) -> ConicProgramIR:
    """Rewards with ``E[huber_delta(f @ r)] <= g``, transitions at ``p0``."""
    V = np.asarray(d["V"], dtype=float)
    p0 = np.asarray(d["p0"], dtype=float).ravel()
    f = np.asarray(d["f"], dtype=float)
    g = float(d["g"])
    delta = float(d["delta"])
    na = V.shape[1]
    ir = _base(na)
    ir.add_block("nu", 1, NonNegative(1))
    ir.add_block("theta", 1)
    ir.add_block("q", 1)
    one = np.ones((1, 1))
    ir.add_membership("objective", {"w": -one, "kappa": one, "nu": g * one}, 0.0, NonNegative(1))
    ir.add_membership("constant", {"kappa": -one, "pi": -(p0 @ V)[None, :], "q": one}, 0.0, NonNegative(1))
    # 2 q nu >= theta^2
    ir.add_membership("curvature", {"q": -np.array([[1.0], [0.0], [0.0]]), "nu": -np.array([[0.0], [1.0], [0.0]]),
                                    "theta": -np.array([[0.0], [0.0], [1.0]])}, np.zeros(3), RotatedSecondOrder(3))
    ir.add_equality("direction", {"pi": np.eye(na), "theta": f[:, None]}, np.zeros(na))
    # |theta| <= delta nu
    ir.add_membership("slope", {"nu": -delta * np.ones((2, 1)), "theta": np.array([[-1.0], [1.0]])},
                      np.zeros(2), NonNegative(2))
    if d.get("force_nu_zero"):
        ir.add_equality("nu_zero", {"nu": one}, 0.0)
    return ir


def solve_example(kind: str, data: dict, pi_fixed=None, tol: Tolerances | None = None,
                  backend: str = "clarabel") -> SRobustSolution:
    out = solve(build_example_program(kind, data, pi_fixed), tol, backend)
    if not out.optimal:
        raise _diagnose(out, data.get("state"))
    v = out.values
    pi = np.clip(v["pi"], 0.0, None)
    return SRobustSolution(pi / pi.sum(), -float(v["w"][0]), {k: v[k] for k in v if k not in ("w", "pi")},
                           out.residuals, outcome=out)
