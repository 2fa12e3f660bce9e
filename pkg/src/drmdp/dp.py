"""Distributionally robust dynamic programming.

Finite horizons are solved by backward induction over stages, infinite
horizons by value iteration on the robust Bellman operator, which is a
``gamma``-contraction in the sup norm.  Every per-state backup is one
S-robust program (:mod:`drmdp.srobust`).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .ambiguity import AmbiguityError, AmbiguitySet
from .ambiguity.verify import require_certified
from .conic import Tolerances
from .mdp import MdpSkeleton, Policy
from .srobust import SRobustError, SRobustInstance, solve_srobust

log = logging.getLogger(__name__)


@dataclass
class UncertainMdp:
    """MDP skeleton with one ambiguity set per decision state."""

    mdp: MdpSkeleton
    ambiguity: Mapping

    def __post_init__(self):
        for s in self.decision_states():
            if s not in self.ambiguity:
                raise AmbiguityError(f"state {s!r} has no ambiguity set")
            amb: AmbiguitySet = self.ambiguity[s]
            if amb.n_actions != self.mdp.n_actions(s) or amb.n_succ != len(self.mdp.succ(s)):
                raise AmbiguityError(f"ambiguity set of state {s!r} has {amb.n_actions} actions and "
                                     f"{amb.n_succ} successors; the MDP has {self.mdp.n_actions(s)} "
                                     f"and {len(self.mdp.succ(s))}")
            if amb.state is None:
                amb.state = s

    def decision_states(self) -> list:
        return [s for s in self.mdp.states if not self.mdp.is_terminal(s)]

    def verify(self):
        """Certify every ambiguity set (raises on the first failure)."""
        for s in self.decision_states():
            require_certified(self.ambiguity[s])


@dataclass
class DistributionallyRobustSolution:
    policy: Policy
    values: np.ndarray
    iterations: int
    residual: float
    converged: bool
    stage_values: dict = field(default_factory=dict)
    wall_clock: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    state_index: dict = field(default_factory=dict, repr=False)

    def value(self, s) -> float:
        return float(self.values[self.state_index[s]])

    def to_json(self) -> dict:
        return {
            "policy": {str(s): [float(x) for x in self.policy[s]] for s in self.policy.rows},
            "values": {str(s): float(self.values[i]) for s, i in self.state_index.items()},
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "history": [float(h) for h in self.history],
        }


def _point_backup(amb: AmbiguitySet, V: np.ndarray):
    """Exact backup when the set is a single pinned point (no solver needed)."""
    box = amb.sets[-1].box
    if amb.n_sets != 1 or amb.moments.k or amb.Q or box is None or not np.array_equal(box[0], box[1]):
        return None
    p, r = box[0][:amb.n_p], box[0][amb.n_p:amb.n_p + amb.n_r]
    q = r + V.T @ p
    a = int(np.argmax(q))
    pi = np.zeros(amb.n_actions)
    pi[a] = 1.0
    return pi, float(q[a])


class _Backup:
    def __init__(self, problem: UncertainMdp, check: bool, fast_point: bool, tol, backend):
        self.problem = problem
        self.check = check
        self.fast_point = fast_point
        self.tol = tol
        self.backend = backend
        if check:
            problem.verify()

    def __call__(self, s, values: np.ndarray):
        mdp = self.problem.mdp
        amb = self.problem.ambiguity[s]
        V = mdp.continuation_matrix(s, values)
        if self.fast_point:
            hit = _point_backup(amb, V)
            if hit is not None:
                return hit
        try:
            sol = solve_srobust(SRobustInstance(amb, V), check=False, tol=self.tol, backend=self.backend)
        except SRobustError as exc:
            stage = mdp.space.stage[s]
            raise SRobustError(f"stage {stage}, state {s!r}: {exc}", exc.reason, exc.status) from exc
        return sol.policy, sol.value


def backward_induction(problem: UncertainMdp, check: bool = True, fast_point: bool = False,
                       tol: Tolerances | None = None, backend: str = "clarabel") -> DistributionallyRobustSolution:
    """S-robust values and actions stage by stage, from the last stage down.

    Values of the final stage are zero.  The result is the non-stationary
    solution; for the stationary finite-horizon model it is a lower bound.
    """
    mdp = problem.mdp
    if not mdp.horizon.finite:
        raise ValueError("backward induction needs a finite horizon")
    backup = _Backup(problem, check, fast_point, tol, backend)
    v = np.zeros(mdp.n_states)
    rows, stage_values, clock = {}, {}, {}
    for s in mdp.space.states_in(mdp.horizon.T):
        rows[s] = np.eye(mdp.n_actions(s))[0]
    for t in range(mdp.horizon.T - 1, 0, -1):
        t0 = time.perf_counter()
        for s in mdp.space.states_in(t):
            pi, val = backup(s, v)
            rows[s] = pi
            v[mdp.index[s]] = val
        stage_values[t] = {s: v[mdp.index[s]] for s in mdp.space.states_in(t)}
        clock[t] = time.perf_counter() - t0
    return DistributionallyRobustSolution(Policy(rows), v, mdp.horizon.T - 1, 0.0, True, stage_values, clock,
                                          state_index=dict(mdp.index))


def bellman_apply(problem: UncertainMdp, v: np.ndarray, check: bool = False, fast_point: bool = False,
                  tol: Tolerances | None = None, backend: str = "clarabel", _backup=None):
    """One application of the robust Bellman operator; returns ``(Lv, policy rows)``."""
    mdp = problem.mdp
    backup = _backup or _Backup(problem, check, fast_point, tol, backend)
    out = np.zeros(mdp.n_states)
    rows = {}
    for s in mdp.states:
        if mdp.is_terminal(s):
            rows[s] = np.eye(mdp.n_actions(s))[0]
            continue
        pi, val = backup(s, v)
        rows[s] = pi
        out[mdp.index[s]] = val
    return out, rows


def iteration_bound(eps: float, gamma: float, first_step: float) -> int:
    """Iterations the contraction argument needs before the stopping rule fires."""
    if first_step <= eps * (1 - gamma) / gamma:
        return 1
    return math.ceil(math.log(eps * (1 - gamma) / (gamma * first_step)) / math.log(gamma)) + 1


def value_iteration(problem: UncertainMdp, eps: float = 1e-6, max_iter: int = 10000, v0=None,
                    check: bool = True, fast_point: bool = False, tol: Tolerances | None = None,
                    backend: str = "clarabel") -> DistributionallyRobustSolution:
    """Iterate ``v <- L v`` until successive iterates differ by at most ``eps (1 - gamma) / gamma``.

    The returned values are then within ``eps`` of the fixed point and the
    policy is S-robust with respect to the final iterate.
    """
    mdp = problem.mdp
    g = mdp.gamma
    if g >= 1.0:
        raise ValueError("value iteration needs a discount below 1")
    if eps <= 0:
        raise ValueError("eps must be positive")
    backup = _Backup(problem, check, fast_point, tol, backend)
    v = np.zeros(mdp.n_states) if v0 is None else np.asarray(v0, dtype=float).copy()
    threshold = eps * (1 - g) / g
    history = []
    t0 = time.perf_counter()
    rows = {}
    for it in range(1, max_iter + 1):
        nv, rows = bellman_apply(problem, v, _backup=backup)
        diff = float(np.max(np.abs(nv - v))) if len(v) else 0.0
        history.append(diff)
        v = nv
        if diff <= threshold:
            return DistributionallyRobustSolution(Policy(rows), v, it, diff, True, {},
                                                  {"total": time.perf_counter() - t0}, history,
                                                  dict(mdp.index))
    log.warning("value iteration stopped after %d iterations (residual %.3g)", max_iter, history[-1])
    return DistributionallyRobustSolution(Policy(rows), v, max_iter, history[-1], False, {},
                                          {"total": time.perf_counter() - t0}, history, dict(mdp.index))
