"""Machine replacement benchmark.

Chain layout: states ``1..n`` sit at stages ``1..n`` and a terminal state
``"done"`` closes the horizon.  At each state the agent either repairs (pays
the repair cost, moves to ``"done"``) or waits (free before the last state,
moves one state ahead).  Waiting at the last state pays the risky terminal
cost and also ends the episode.  Rewards are negated costs; the discount is
0.8.  The last two states have noisier repair costs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..ambiguity import AmbiguitySet
from ..ambiguity.sets import box_set
from ..dp import UncertainMdp
from ..mdp import ActionSpace, Horizon, MdpSkeleton, StateSpace
from .gmm import GaussianMixture1D, central_interval, component_interval, estimate
from .simulate import ActionLaw, GroundTruth

VARIANTS = ("nominal", "robust", "dr_nested", "dr_disjoint")
REPAIR, WAIT = 0, 1
DONE = "done"


@dataclass
class MachineReplacementConfig:
    n_states: int = 50
    gamma: float = 0.8
    case: str = "gaussian"              # "gaussian" | "mixed"
    variant: str = "nominal"
    repair_mean: float = 130.0
    repair_var: float = 1.0
    risky_repair_var: float = 10.0
    wait_mean: float = 100.0            # gaussian case terminal law
    wait_var: float = 800.0
    mixture_weights: tuple = (0.8, 0.2)
    mixture_means: tuple = (100.0, 140.0)
    mixture_vars: tuple = (10.0, 2.0)
    estimation: str = "exact"           # "exact" | "sample"
    sample_size: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.n_states < 2:
            raise ValueError("the chain needs at least two states")
        if self.case not in ("gaussian", "mixed"):
            raise ValueError(f"unknown case {self.case!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.variant == "dr_disjoint" and self.case != "mixed":
            raise ValueError("the disjoint construction needs the mixed terminal law")
        if self.estimation not in ("exact", "sample"):
            raise ValueError("estimation must be 'exact' or 'sample'")
        if min(self.repair_var, self.risky_repair_var, self.wait_var, *self.mixture_vars) <= 0:
            raise ValueError("cost laws need positive variances")
        if self.sample_size < 2:
            raise ValueError("sample size must be at least 2")
        if not 0 < self.gamma < 1:
            raise ValueError("discount must lie in (0, 1)")

    # true cost laws --------------------------------------------------------
    def repair_law(self, i: int) -> GaussianMixture1D:
        var = self.risky_repair_var if i >= self.n_states - 1 else self.repair_var
        return GaussianMixture1D.normal(self.repair_mean, var)

    def wait_law(self) -> GaussianMixture1D:
        if self.case == "gaussian":
            return GaussianMixture1D.normal(self.wait_mean, self.wait_var)
        return GaussianMixture1D(np.asarray(self.mixture_weights, dtype=float),
                                 np.asarray(self.mixture_means, dtype=float),
                                 np.asarray(self.mixture_vars, dtype=float))

    @property
    def K(self) -> int:
        return 1 if self.case == "gaussian" else len(self.mixture_weights)


@dataclass
class BenchmarkInstance:
    problem: UncertainMdp
    truth: GroundTruth
    estimated: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def negate(law: GaussianMixture1D) -> GaussianMixture1D:
    return GaussianMixture1D(law.weights, -law.means, law.variances)


def machine_skeleton(n: int, gamma: float) -> MdpSkeleton:
    states = tuple(range(1, n + 1)) + (DONE,)
    stage = {i: i for i in range(1, n + 1)}
    stage[DONE] = n + 1
    actions = {i: ("repair", "wait") for i in range(1, n + 1)}
    actions[DONE] = ("stay",)
    succ = {i: (i + 1, DONE) for i in range(1, n)}
    succ[n] = (DONE,)
    return MdpSkeleton(StateSpace(states, stage, 1), ActionSpace(actions), Horizon("finite", gamma, n + 1), succ)


def _transition(i: int, n: int) -> np.ndarray:
    """Pinned transition vector, repair block then wait block."""
    if i == n:
        return np.array([1.0, 1.0])
    return np.array([0.0, 1.0, 1.0, 0.0])


def _estimate_laws(cfg: MachineReplacementConfig) -> dict:
    """Cost laws the decision maker believes in: exact, or fitted to samples."""
    n = cfg.n_states
    true = {("repair", i): cfg.repair_law(i) for i in range(1, n + 1)}
    true["wait"] = cfg.wait_law()
    if cfg.estimation == "exact":
        return true
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919]))
    est = {}
    for key, law in true.items():
        x = law.sample(cfg.sample_size, rng)
        est[key] = estimate(x, cfg.K if key == "wait" else 1)
    return est


def _support(law: GaussianMixture1D, case: str, width: float, q: float) -> tuple[float, float]:
    """Cost support: ``mean +- width sd`` for Gaussian laws, a central ``q`` interval for mixtures."""
    if case == "gaussian":
        sd = math.sqrt(law.var())
        return law.mean() - width * sd, law.mean() + width * sd
    return central_interval(law, q)


def _reward_box(n_p: int, p: np.ndarray, cost_lo, cost_hi, prob_lo=1.0, prob_hi=1.0, parent=None):
    lo = np.r_[p, -np.asarray(cost_hi, dtype=float)]
    hi = np.r_[p, -np.asarray(cost_lo, dtype=float)]
    return box_set(lo, hi, n_p, 2, 0, prob_lo, prob_hi, parent)


def machine_ambiguity(cfg: MachineReplacementConfig, est: dict) -> dict:
    n = cfg.n_states
    sig_q, last_q = 0.99, 0.999
    out = {}
    for i in range(1, n + 1):
        p = _transition(i, n)
        na, ns = 2, len(p) // 2
        rep = est[("repair", i)]
        wait = est["wait"] if i == n else None
        if cfg.variant == "nominal":
            c = [rep.mean(), wait.mean() if wait is not None else 0.0]
            out[i] = AmbiguitySet(na, ns, [_reward_box(len(p), p, c, c)], state=i)
            continue
        width, q = (4.0, last_q) if i == n else (3.0, sig_q)
        r_lo, r_hi = _support(rep, cfg.case, width, q)
        w_lo, w_hi = _support(wait, cfg.case, width, q) if wait is not None else (0.0, 0.0)
        support = _reward_box(len(p), p, [r_lo, w_lo], [r_hi, w_hi])
        if i < n or cfg.variant == "robust":
            out[i] = AmbiguitySet(na, ns, [support], state=i)
            continue
        sets = []
        if cfg.variant == "dr_nested":
            # each box is a product of per-dimension central intervals whose
            # coverages multiply to the listed confidence level
            levels = [(0.6232, 0.6, 0.7)] if cfg.case == "gaussian" else [(0.4096, 0.4, 0.5), (0.6561, 0.6, 0.7)]
            for k, (cov, a, b) in enumerate(levels):
                c = math.sqrt(cov)
                rl, rh = central_interval(rep, c)
                wl, wh = central_interval(wait, c)
                parent = k + 1 if k + 1 < len(levels) else None
                sets.append(_reward_box(len(p), p, [rl, wl], [rh, wh], a, b, parent))
        else:
            # disjoint boxes around the two mixture peaks
            for k, (cov, a, b) in enumerate([(0.7797, 0.7, 0.8), (0.0990, 0.0, 0.1)]):
                c = math.sqrt(cov)
                rl, rh = central_interval(rep, c)
                wl, wh = component_interval(wait, k, c)
                sets.append(_reward_box(len(p), p, [rl, wl], [rh, wh], a, b, None))
        sets.append(support)
        out[i] = AmbiguitySet(na, ns, sets, state=i)
    return out


def machine_truth(cfg: MachineReplacementConfig, mdp: MdpSkeleton) -> GroundTruth:
    n = cfg.n_states
    laws = {}
    for i in range(1, n + 1):
        p = _transition(i, n)
        ns = len(p) // 2
        wait_reward = negate(cfg.wait_law()) if i == n else 0.0
        laws[i] = [ActionLaw(negate(cfg.repair_law(i)), p[:ns]), ActionLaw(wait_reward, p[ns:])]
    return GroundTruth(mdp, laws, frozenset([DONE]))


def generate_machine_problem(cfg: MachineReplacementConfig) -> BenchmarkInstance:
    """Uncertain chain for one strategy variant, plus the true laws for simulation."""
    mdp = machine_skeleton(cfg.n_states, cfg.gamma)
    est = _estimate_laws(cfg)
    amb = machine_ambiguity(cfg, est)
    problem = UncertainMdp(mdp, amb)
    info = {"variant": cfg.variant, "case": cfg.case, "estimation": cfg.estimation}
    return BenchmarkInstance(problem, machine_truth(cfg, mdp), est, info)


def repair_state(policy, n: int) -> int | None:
    """First state where the policy repairs, ``None`` if it never does."""
    for i in range(1, n + 1):
        if policy.action(i) == REPAIR:
            return i
    return None


def closed_form_value(cfg: MachineReplacementConfig, repair_at: int | None) -> float:
    """Exact mean return of the policy that waits until ``repair_at`` and repairs there."""
    g = cfg.gamma
    if repair_at is None:
        return -cfg.wait_law().mean() * g ** (cfg.n_states - 1)
    return -cfg.repair_law(repair_at).mean() * g ** (repair_at - 1)

