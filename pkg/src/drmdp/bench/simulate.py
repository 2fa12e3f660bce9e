"""Ground-truth parameter laws, Monte Carlo policy simulation and the mean-reduction check.

Every visit to a state draws a fresh reward (and, where present, a fresh
jump probability), so simulated returns follow the non-stationary model.
Run ``k`` of a simulation with seed ``s`` always uses the stream
``PCG64(SeedSequence([s, k]))``; results therefore do not depend on how runs
are batched or scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.stats import norm

from ..kernels import get_kernel
from ..mdp import FixedParameters, MdpSkeleton, Policy, evaluate_policy
from .gmm import GaussianMixture1D

DEFAULT_STEP_CAP = 100_000
POLICY_ZERO_TOL = 1e-8


@dataclass
class ActionLaw:
    """True law of one (state, action) pair.

    ``transition`` is the base successor distribution over ``mdp.succ(s)``.
    ``jump`` optionally redirects the move: with a probability drawn from the
    given law (clipped to ``[0, 1]``) the agent lands on the named state
    instead of the base successor.
    """

    reward: GaussianMixture1D | float
    transition: np.ndarray
    jump: tuple | None = None

    def reward_law(self) -> GaussianMixture1D | None:
        return self.reward if isinstance(self.reward, GaussianMixture1D) else None

    def mean_reward(self) -> float:
        law = self.reward_law()
        return law.mean() if law is not None else float(self.reward)


def clipped_mean(law: GaussianMixture1D | float) -> float:
    """``E[min(max(X, 0), 1)]`` for a Gaussian mixture (or a constant)."""
    if not isinstance(law, GaussianMixture1D):
        return float(min(1.0, max(0.0, law)))
    out = 0.0
    for w, m, s in zip(law.weights, law.means, law.sds):
        a, b = (0.0 - m) / s, (1.0 - m) / s
        inside = m * (norm.cdf(b) - norm.cdf(a)) + s * (norm.pdf(a) - norm.pdf(b))
        out += w * (inside + norm.sf(b))
    return float(out)


def clean_row(row, tol: float = POLICY_ZERO_TOL) -> np.ndarray:
    """Drop solver-noise weights so near-deterministic rows simulate deterministically."""
    row = np.where(np.asarray(row, dtype=float) > tol, row, 0.0)
    return row / row.sum()


@dataclass
class GroundTruth:
    """An MDP skeleton together with the true laws used for simulation.

    ``terminal`` lists the states where an episode stops (absorbing exits and
    the final stage of a finite horizon).
    """

    mdp: MdpSkeleton
    laws: Mapping
    terminal: frozenset = frozenset()

    def __post_init__(self):
        term = set(self.terminal)
        for s in self.mdp.states:
            if self.mdp.is_terminal(s):
                term.add(s)
        self.terminal = frozenset(term)
        for s in self.mdp.states:
            if s in self.terminal:
                continue
            laws = self.laws.get(s)
            if laws is None or len(laws) != self.mdp.n_actions(s):
                raise ValueError(f"state {s!r} needs one law per action")
            ns = len(self.mdp.succ(s))
            for law in laws:
                t = np.asarray(law.transition, dtype=float)
                if t.shape != (ns,) or abs(t.sum() - 1.0) > 1e-9 or np.any(t < 0):
                    raise ValueError(f"base transition of {s!r} must be a distribution over its successors")
                if law.jump is not None and law.jump[0] not in self.mdp.succ(s):
                    raise ValueError(f"jump target of {s!r} must be one of its successors")

    def mean_parameters(self) -> FixedParameters:
        """Transition and reward means, the parameters the mean-reduction check evaluates."""
        P, R = {}, {}
        for s in self.mdp.states:
            na, succ = self.mdp.n_actions(s), self.mdp.succ(s)
            if s in self.terminal:
                R[s] = np.zeros(na)
                P[s] = np.tile(np.eye(len(succ))[0], (na, 1)) if succ else np.zeros((na, 0))
                continue
            rows, rew = [], []
            for law in self.laws[s]:
                row = np.asarray(law.transition, dtype=float).copy()
                if law.jump is not None:
                    theta = clipped_mean(law.jump[1])
                    row = (1 - theta) * row
                    row[succ.index(law.jump[0])] += theta
                rows.append(row)
                rew.append(law.mean_reward())
            P[s], R[s] = np.array(rows), np.array(rew)
        return FixedParameters(P, R)

    def deterministic_rewards(self) -> bool:
        return all(law.reward_law() is None or np.all(law.reward_law().variances <= 1e-12)
                   for s, laws in self.laws.items() if s not in self.terminal for law in laws)

    def flatten(self, policy: Policy) -> dict:
        """Array layout consumed by the simulation kernels."""
        mdp = self.mdp
        states = mdp.states
        n = len(states)
        counts = np.array([mdp.n_actions(s) for s in states], dtype=np.int64)
        off = np.zeros(n + 1, dtype=np.int64)
        off[1:] = np.cumsum(counts)
        nsa = int(off[-1])
        max_succ = max([len(mdp.succ(s)) for s in states] + [1])
        kmax = 1
        for s, laws in self.laws.items():
            for law in laws:
                if law.reward_law() is not None:
                    kmax = max(kmax, law.reward_law().K)
                if law.jump is not None and isinstance(law.jump[1], GaussianMixture1D):
                    kmax = max(kmax, law.jump[1].K)
        t = {
            "offsets": off, "initial": mdp.index[mdp.space.initial_state], "gamma": mdp.gamma,
            "terminal": np.array([s in self.terminal for s in states], dtype=np.uint8),
            "policy": np.zeros(nsa), "policy_random": np.zeros(n, dtype=np.uint8),
            "succ": np.zeros((nsa, max_succ), dtype=np.int64), "prob": np.zeros((nsa, max_succ)),
            "nsucc": np.zeros(nsa, dtype=np.int64), "base_random": np.zeros(nsa, dtype=np.uint8),
            "rew_k": np.ones(nsa, dtype=np.int64), "rew_w": np.zeros((nsa, kmax)),
            "rew_m": np.zeros((nsa, kmax)), "rew_s": np.zeros((nsa, kmax)),
            "jump_to": np.full(nsa, -1, dtype=np.int64), "jump_k": np.ones(nsa, dtype=np.int64),
            "jump_w": np.zeros((nsa, kmax)), "jump_m": np.zeros((nsa, kmax)), "jump_s": np.zeros((nsa, kmax)),
        }

        def put(prefix, sa, law):
            if isinstance(law, GaussianMixture1D):
                k = law.K
                t[prefix + "_k"][sa] = k
                t[prefix + "_w"][sa, :k] = law.weights
                t[prefix + "_m"][sa, :k] = law.means
                t[prefix + "_s"][sa, :k] = law.sds
            else:
                t[prefix + "_w"][sa, 0] = 1.0
                t[prefix + "_m"][sa, 0] = float(law)

        for i, s in enumerate(states):
            if s in self.terminal:
                continue
            row = clean_row(policy[s])
            if len(row) != counts[i]:
                raise ValueError(f"policy row of {s!r} has {len(row)} entries, expected {counts[i]}")
            t["policy"][off[i]:off[i + 1]] = row
            t["policy_random"][i] = np.count_nonzero(row > 0) > 1
            succ_idx = [mdp.index[x] for x in mdp.succ(s)]
            for a, law in enumerate(self.laws[s]):
                sa = off[i] + a
                prob = np.asarray(law.transition, dtype=float)
                t["succ"][sa, :len(succ_idx)] = succ_idx
                t["prob"][sa, :len(succ_idx)] = prob
                t["nsucc"][sa] = len(succ_idx)
                positive = np.nonzero(prob > 0)[0]
                t["base_random"][sa] = len(positive) > 1
                if len(positive) == 1:
                    # a deterministic row always moves to its single positive successor
                    t["succ"][sa, 0] = succ_idx[positive[0]]
                put("rew", sa, law.reward)
                if law.jump is not None:
                    t["jump_to"][sa] = mdp.index[law.jump[0]]
                    put("jump", sa, law.jump[1])
        return t


@dataclass
class SimulationReport:
    """Per-run discounted returns and step counts of one simulation."""

    returns: np.ndarray
    steps: np.ndarray
    capped: np.ndarray
    seed: int
    runs: int
    kernel: str
    metric: str = "return"
    extra: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        """The reported per-run quantity: discounted return, or the step count for exit times."""
        return self.steps.astype(float) if self.metric == "exit_time" else self.returns

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def stderr(self) -> float:
        if self.runs < 2:
            return 0.0
        return float(np.std(self.values, ddof=1) / math.sqrt(self.runs))

    @property
    def n_capped(self) -> int:
        return int(np.count_nonzero(self.capped))

    def histogram(self, bins: int = 30):
        return np.histogram(self.values, bins=bins)

    def summary(self) -> dict:
        counts, edges = self.histogram()
        return {"metric": self.metric, "mean": self.mean, "stderr": self.stderr, "runs": self.runs,
                "seed": self.seed, "kernel": self.kernel, "capped": self.n_capped,
                "mean_steps": float(np.mean(self.steps)) if self.runs else 0.0,
                "histogram": {"counts": counts.tolist(), "edges": edges.tolist()}, **self.extra}


def run_streams(seed: int, start: int, stop: int) -> list:
    return [np.random.PCG64(np.random.SeedSequence([seed, k])) for k in range(start, stop)]


def simulate(truth: GroundTruth, policy: Policy, runs: int, seed: int = 0,
             cap: int = DEFAULT_STEP_CAP, kernel: str | None = None, workers: int = 1,
             metric: str = "return", chunk: int = 2048) -> SimulationReport:
    """Simulate ``runs`` episodes of ``policy`` under the true laws.

    With ``workers > 1`` chunks of runs are simulated on a thread pool; the
    compiled kernel releases the GIL while it runs.
    """
    if runs < 1:
        raise ValueError("runs must be positive")
    if cap < 1:
        raise ValueError("step cap must be positive")
    name, run_batch = get_kernel(kernel)
    flat = truth.flatten(policy)
    bounds = [(a, min(a + chunk, runs)) for a in range(0, runs, chunk)]

    def work(b):
        return run_batch(run_streams(seed, *b), flat, cap)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    rets = np.concatenate([p[0] for p in parts])
    steps = np.concatenate([p[1] for p in parts])
    capped = np.concatenate([p[2] for p in parts]).astype(bool)
    return SimulationReport(rets, steps, capped, seed, runs, name, metric)


@dataclass
class MeanReductionReport:
    mc_mean: float
    stderr: float
    exact: float
    difference: float
    within: bool
    report: SimulationReport


def mean_reduction_check(truth: GroundTruth, policy: Policy, runs: int = 10_000, seed: int = 0,
                         n_se: float = 4.0, kernel: str | None = None, metric: str = "return",
                         workers: int = 1) -> MeanReductionReport:
    """Monte Carlo mean return versus exact evaluation at the mean parameters.

    For ``metric="exit_time"`` the exact side is the expected number of steps
    until the terminal set, evaluated with unit rewards and no discount.
    """
    rep = simulate(truth, policy, runs, seed, kernel=kernel, metric=metric, workers=workers)
    params = truth.mean_parameters()
    if metric == "exit_time":
        exact = expected_steps(truth, params, policy)
    else:
        exact = evaluate_policy(truth.mdp, params, policy)
    diff = rep.mean - exact
    if rep.stderr == 0.0:
        ok = abs(diff) <= 1e-9 * max(1.0, abs(exact))
    else:
        ok = abs(diff) <= n_se * rep.stderr
    return MeanReductionReport(rep.mean, rep.stderr, exact, diff, ok, rep)


def expected_steps(truth: GroundTruth, params: FixedParameters, policy: Policy) -> float:
    """Expected number of moves before reaching the terminal set."""
    mdp = truth.mdp
    live = [s for s in mdp.states if s not in truth.terminal]
    idx = {s: i for i, s in enumerate(live)}
    n = len(live)
    P = np.zeros((n, n))
    for s in live:
        pi = policy[s]
        for k, nxt in enumerate(mdp.succ(s)):
            if nxt in idx:
                P[idx[s], idx[nxt]] += pi @ params.transition[s][:, k]
    h = np.linalg.solve(np.eye(n) - P, np.ones(n))
    s0 = mdp.space.initial_state
    return 0.0 if s0 in truth.terminal else float(h[idx[s0]])
