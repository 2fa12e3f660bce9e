"""Finite MDP skeleton, policies, value functions and exact policy evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

StateId = Hashable

SIMPLEX_TOL = 1e-9


class MdpError(ValueError):
    pass


def _check_simplex(v: np.ndarray, what: str, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate a probability vector, renormalizing tiny deviations."""
    v = np.asarray(v, dtype=float)
    if np.any(v < -tol) or abs(v.sum() - 1.0) > tol:
        raise MdpError(f"{what} is not a probability vector (sum={v.sum():.12g}, min={v.min():.3g})")
    v = np.clip(v, 0.0, None)
    return v / v.sum()


@dataclass(frozen=True)
class StateSpace:
    states: tuple
    stage: Mapping[StateId, int]
    initial_state: StateId

    def __post_init__(self):
        if len(set(self.states)) != len(self.states):
            raise MdpError("duplicate state identifiers")
        missing = [s for s in self.states if s not in self.stage]
        if missing:
            raise MdpError(f"states without a stage: {missing[:5]}")
        if self.initial_state not in self.stage:
            raise MdpError(f"unknown initial state {self.initial_state!r}")
        stages = sorted(set(self.stage[s] for s in self.states))
        if stages != list(range(1, len(stages) + 1)):
            raise MdpError("stage indices must be contiguous from 1")

    @property
    def n_stages(self) -> int:
        return max(self.stage[s] for s in self.states)

    def states_in(self, t: int) -> list:
        return [s for s in self.states if self.stage[s] == t]


@dataclass(frozen=True)
class ActionSpace:
    actions_per_state: Mapping[StateId, tuple]

    def __post_init__(self):
        for s, acts in self.actions_per_state.items():
            if len(acts) < 1:
                raise MdpError(f"state {s!r} has no actions")

    def __getitem__(self, s) -> tuple:
        return self.actions_per_state[s]

    def n(self, s) -> int:
        return len(self.actions_per_state[s])


@dataclass(frozen=True)
class Horizon:
    kind: str  # "finite" | "infinite"
    gamma: float
    T: int | None = None

    def __post_init__(self):
        if self.kind not in ("finite", "infinite"):
            raise MdpError(f"horizon kind must be finite or infinite, got {self.kind!r}")
        if not 0.0 < self.gamma <= 1.0:
            raise MdpError("discount must lie in (0, 1]")
        if self.kind == "infinite" and self.gamma >= 1.0:
            raise MdpError("infinite horizon requires a discount below 1")
        if self.kind == "finite" and (self.T is None or self.T < 1):
            raise MdpError("finite horizon requires a positive T")

    @property
    def finite(self) -> bool:
        return self.kind == "finite"


@dataclass
class MdpSkeleton:
    """States, stages, actions, successor lists and horizon.

    ``successors[s]`` fixes the ordering of next states inside every action
    block of the transition vector of ``s``; it defaults to the global state
    order restricted to the admissible next states.
    """

    space: StateSpace
    actions: ActionSpace
    horizon: Horizon
    successors: Mapping[StateId, tuple]
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.index = {s: i for i, s in enumerate(self.space.states)}
        for s in self.space.states:
            succ = tuple(self.successors.get(s, ()))
            for nxt in succ:
                if nxt not in self.index:
                    raise MdpError(f"successor {nxt!r} of {s!r} is not a state")
            if self.horizon.finite:
                t = self.space.stage[s]
                if t < self.horizon.T and not succ:
                    raise MdpError(f"non-terminal state {s!r} has no successors")
                for nxt in succ:
                    if self.space.stage[nxt] <= t:
                        raise MdpError(f"successor {nxt!r} of {s!r} is not in a later stage")
            elif not succ:
                raise MdpError(f"state {s!r} has no successors")
        if self.horizon.finite:
            if self.space.n_stages != self.horizon.T:
                raise MdpError(f"horizon T={self.horizon.T} but states span {self.space.n_stages} stages")
            first = self.space.states_in(1)
            if first != [self.space.initial_state]:
                raise MdpError("the first stage must contain exactly the initial state")

    @property
    def states(self) -> tuple:
        return self.space.states

    @property
    def n_states(self) -> int:
        return len(self.space.states)

    @property
    def gamma(self) -> float:
        return self.horizon.gamma

    def n_actions(self, s) -> int:
        return self.actions.n(s)

    def succ(self, s) -> tuple:
        return tuple(self.successors.get(s, ()))

    def is_terminal(self, s) -> bool:
        return self.horizon.finite and self.space.stage[s] == self.horizon.T

    def param_dims(self, s) -> tuple[int, int]:
        """Lengths of the transition vector and the reward vector of ``s``."""
        return self.n_actions(s) * len(self.succ(s)), self.n_actions(s)

    def continuation_matrix(self, s, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        succ_vals = np.array([v[self.index[n]] for n in self.succ(s)])
        return build_continuation_matrix(succ_vals, self.n_actions(s), self.gamma)


def build_continuation_matrix(successor_values, n_actions: int, gamma: float) -> np.ndarray:
    """Stack discounted successor values into one block per action.

    Column ``a`` is zero outside block ``a``; inside it holds
    ``gamma * v(s')`` in successor order, so that
    ``r @ pi + p @ V @ pi`` is the one-step expected return.
    """
    v = np.asarray(successor_values, dtype=float)
    if v.ndim != 1:
        raise MdpError("successor values must be a vector")
    if not np.all(np.isfinite(v)):
        raise MdpError("successor values must be finite")
    if not 0.0 < gamma <= 1.0:
        raise MdpError("discount must lie in (0, 1]")
    n = len(v)
    V = np.zeros((n_actions * n, n_actions))
    for a in range(n_actions):
        V[a * n:(a + 1) * n, a] = gamma * v
    return V


@dataclass(frozen=True)
class FixedParameters:
    """Transition rows (actions x successors) and rewards per state."""

    transition: Mapping[StateId, np.ndarray]
    reward: Mapping[StateId, np.ndarray]

    def validated(self, mdp: MdpSkeleton) -> "FixedParameters":
        P, R = {}, {}
        for s in mdp.states:
            na, ns = mdp.n_actions(s), len(mdp.succ(s))
            r = np.asarray(self.reward[s], dtype=float).reshape(-1)
            if r.shape != (na,):
                raise MdpError(f"reward of {s!r} has shape {r.shape}, expected {(na,)}")
            R[s] = r
            if ns == 0:
                P[s] = np.zeros((na, 0))
                continue
            p = np.asarray(self.transition[s], dtype=float).reshape(na, ns)
            P[s] = np.vstack([_check_simplex(row, f"transition row of {s!r}") for row in p])
        return FixedParameters(P, R)


@dataclass(frozen=True)
class Policy:
    """Markov randomized policy: one probability vector per state."""

    rows: Mapping[StateId, np.ndarray]

    def __post_init__(self):
        for s, row in self.rows.items():
            _check_simplex(row, f"policy row of {s!r}")

    def __getitem__(self, s) -> np.ndarray:
        return np.asarray(self.rows[s], dtype=float)

    @classmethod
    def deterministic(cls, mdp: MdpSkeleton, choice: Mapping[StateId, int]) -> "Policy":
        rows = {}
        for s in mdp.states:
            row = np.zeros(mdp.n_actions(s))
            row[choice.get(s, 0)] = 1.0
            rows[s] = row
        return cls(rows)

    def action(self, s, tol: float = 1e-6) -> int | None:
        """Smallest action index carrying weight >= 1 - tol, else ``None``."""
        row = self[s]
        hits = np.nonzero(row >= 1.0 - tol)[0]
        return int(hits[0]) if len(hits) else None


def evaluate_policy(mdp: MdpSkeleton, params: FixedParameters, policy: Policy) -> float:
    """Exact expected discounted return from the initial state."""
    return float(policy_values(mdp, params, policy)[mdp.index[mdp.space.initial_state]])


def policy_values(mdp: MdpSkeleton, params: FixedParameters, policy: Policy) -> np.ndarray:
    params = params.validated(mdp)
    g = mdp.gamma
    n = mdp.n_states
    if mdp.horizon.finite:
        v = np.zeros(n)
        for t in range(mdp.horizon.T - 1, 0, -1):
            for s in mdp.space.states_in(t):
                pi = policy[s]
                succ = [mdp.index[x] for x in mdp.succ(s)]
                q = params.reward[s] + g * params.transition[s] @ v[succ]
                v[mdp.index[s]] = pi @ q
        return v
    if g >= 1.0:
        raise MdpError("infinite horizon evaluation requires a discount below 1")
    P = np.zeros((n, n))
    r = np.zeros(n)
    for s in mdp.states:
        i = mdp.index[s]
        pi = policy[s]
        r[i] = pi @ params.reward[s]
        for k, nxt in enumerate(mdp.succ(s)):
            P[i, mdp.index[nxt]] += pi @ params.transition[s][:, k]
    return np.linalg.solve(np.eye(n) - g * P, r)


def classical_backup(mdp: MdpSkeleton, params: FixedParameters, values: np.ndarray):
    """One Bellman optimality backup under fixed parameters.

    Returns the backed-up values and the greedy action per state.
    """
    params = params.validated(mdp)
    out = np.zeros(mdp.n_states)
    greedy = {}
    for s in mdp.states:
        if mdp.is_terminal(s):
            greedy[s] = 0
            continue
        succ = [mdp.index[x] for x in mdp.succ(s)]
        q = params.reward[s] + mdp.gamma * params.transition[s] @ values[succ]
        greedy[s] = int(np.argmax(q))
        out[mdp.index[s]] = q.max()
    return out, greedy


def classical_dp(mdp: MdpSkeleton, params: FixedParameters, tol: float = 1e-12, max_iter: int = 100000):
    """Optimal values of a fixed-parameter MDP (backward induction or value iteration)."""
    n = mdp.n_states
    if mdp.horizon.finite:
        v = np.zeros(n)
        greedy = {}
        params = params.validated(mdp)
        for t in range(mdp.horizon.T - 1, 0, -1):
            for s in mdp.space.states_in(t):
                succ = [mdp.index[x] for x in mdp.succ(s)]
                q = params.reward[s] + mdp.gamma * params.transition[s] @ v[succ]
                greedy[s] = int(np.argmax(q))
                v[mdp.index[s]] = q.max()
        return v, greedy
    v = np.zeros(n)
    for _ in range(max_iter):
        nv, greedy = classical_backup(mdp, params, v)
        if np.max(np.abs(nv - v)) <= tol:
            return nv, greedy
        v = nv
    return v, greedy


def as_sequence(x) -> Sequence:
    return tuple(x)
