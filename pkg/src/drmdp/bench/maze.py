"""Grid maze with shaky cells.

The agent starts at ``S`` and must reach the exit ``E``; every move costs
one time unit.  Moving into the grid border leaves the agent in place.
Landing on a shaky cell (``#``) sends the agent back to the start with an
unknown probability ``theta``.  The ambiguity concerns ``theta`` only: it is
carried as one auxiliary coordinate ``u`` and tied to the transition entries
of every action that lands on a shaky cell by equality rows
``p(start | a) = theta`` and ``p(target | a) = 1 - theta``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..ambiguity import AmbiguitySet
from ..ambiguity.sets import box_set, make_set
from ..cones import NonNegative, Product, Zero
from ..dp import UncertainMdp
from ..mdp import ActionSpace, Horizon, MdpSkeleton, StateSpace
from .gmm import GaussianMixture1D
from .machine import BenchmarkInstance
from .simulate import ActionLaw, GroundTruth

MOVES = {"up": (-1, 0), "down": (1, 0), "left": (0, -1), "right": (0, 1)}
VARIANTS = ("nominal", "robust", "dr_nested", "dr_disjoint")


class LayoutError(ValueError):
    pass


def default_layout() -> list[str]:
    text = resources.files("drmdp").joinpath("data", "maze_default.txt").read_text()
    return parse_layout(text)


def parse_layout(text: str) -> list[str]:
    """Rows of ``.`` (normal), ``#`` (shaky), ``S`` (start) and ``E`` (exit)."""
    rows = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    if not rows:
        raise LayoutError("empty layout")
    width = len(rows[0])
    for k, row in enumerate(rows):
        if len(row) != width:
            raise LayoutError(f"row {k} has {len(row)} cells, expected {width}")
        bad = set(row) - set(".#SE")
        if bad:
            raise LayoutError(f"row {k} has unknown cell markers {sorted(bad)}")
    flat = "".join(rows)
    if flat.count("S") != 1 or flat.count("E") != 1:
        raise LayoutError("layout needs exactly one start S and one exit E")
    return rows


@dataclass
class MazeConfig:
    layout: list = field(default_factory=default_layout)
    lam: float = 0.5
    variant: str = "nominal"
    gamma: float = 0.99
    support: tuple = (0.0, 0.3)
    inner: tuple = (0.09, 0.11)
    second: tuple = (0.19, 0.21)
    jump_means: tuple = (0.1, 0.2)
    jump_var: float = 1e-4

    def __post_init__(self):
        if isinstance(self.layout, str):
            self.layout = parse_layout(self.layout)
        else:
            self.layout = parse_layout("\n".join(self.layout))
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lambda must lie in (0, 1]")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        lo, hi = self.support
        for a, b in (self.inner, self.second):
            if not lo <= a <= b <= hi:
                raise ValueError("confidence intervals must lie inside the jump support")
        if self.inner[1] >= self.second[0]:
            raise ValueError("the two confidence intervals must be disjoint and ordered")

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.layout), len(self.layout[0])

    def find(self, ch: str) -> tuple[int, int]:
        for i, row in enumerate(self.layout):
            j = row.find(ch)
            if j >= 0:
                return i, j
        raise LayoutError(f"no {ch!r} in layout")

    def shaky(self, cell) -> bool:
        return self.layout[cell[0]][cell[1]] == "#"

    def jump_law(self) -> GaussianMixture1D:
        w = np.array([1.0 - self.lam, self.lam])
        return GaussianMixture1D(w, np.array(self.jump_means, dtype=float), np.full(2, self.jump_var))


def move(cell, action: str, shape) -> tuple[int, int]:
    di, dj = MOVES[action]
    i, j = cell[0] + di, cell[1] + dj
    if 0 <= i < shape[0] and 0 <= j < shape[1]:
        return i, j
    return cell


def maze_skeleton(cfg: MazeConfig):
    """Skeleton plus, per state, the landing cell of every action."""
    nr, nc = cfg.shape
    start, exit_ = cfg.find("S"), cfg.find("E")
    cells = tuple((i, j) for i in range(nr) for j in range(nc))
    actions, succ, targets = {}, {}, {}
    for c in cells:
        if c == exit_:
            actions[c] = ("stay",)
            succ[c] = (c,)
            targets[c] = [c]
            continue
        actions[c] = tuple(MOVES)
        tg = [move(c, a, cfg.shape) for a in MOVES]
        nxt = set(tg)
        if any(cfg.shaky(t) for t in tg):
            nxt.add(start)
        succ[c] = tuple(sorted(nxt))
        targets[c] = tg
    stage = {c: 1 for c in cells}
    mdp = MdpSkeleton(StateSpace(cells, stage, start), ActionSpace(actions), Horizon("infinite", cfg.gamma), succ)
    return mdp, targets


def _nominal_p(succ, targets) -> np.ndarray:
    ns = len(succ)
    p = np.zeros(len(targets) * ns)
    for a, t in enumerate(targets):
        p[a * ns + succ.index(t)] = 1.0
    return p


def jump_set(succ, targets, shaky, start, lo: float, hi: float, prob_lo=1.0, prob_hi=1.0,
             parent=None):
    """Confidence set ``theta in [lo, hi]`` with the transition entries tied to ``theta``."""
    na, ns = len(targets), len(succ)
    n_p, n_r, Q = na * ns, na, 1
    N = n_p + n_r + Q
    th = N - 1
    eq_M, eq_b = [], []
    for a, t in enumerate(targets):
        for k, nxt in enumerate(succ):
            row = np.zeros(N)
            row[a * ns + k] = 1.0
            if shaky[a] and nxt == start:        # p - theta = 0
                row[th] = -1.0
                eq_b.append(0.0)
            elif shaky[a] and nxt == t:          # p + theta = 1
                row[th] = 1.0
                eq_b.append(1.0)
            else:
                eq_b.append(0.0 if shaky[a] or nxt != t else 1.0)
            eq_M.append(row)
    for a in range(na):                          # unit cost per move
        row = np.zeros(N)
        row[n_p + a] = 1.0
        eq_M.append(row)
        eq_b.append(-1.0)
    in_M, in_b = [], []
    row = np.zeros(N)
    row[th] = 1.0
    in_M.append(row)
    in_b.append(hi)                              # theta <= hi
    in_M.append(-row)
    in_b.append(-lo)                             # theta >= lo
    M = np.array(eq_M + in_M)
    b = np.array(eq_b + in_b)
    cone = Product(Zero(len(eq_M)), NonNegative(len(in_M)))
    return make_set(n_p, n_r, Q, b, cone, M[:, :n_p], M[:, n_p:n_p + n_r], M[:, n_p + n_r:],
                    prob_lo, prob_hi, parent)


def maze_ambiguity(cfg: MazeConfig, mdp: MdpSkeleton, targets: dict) -> dict:
    start, exit_ = cfg.find("S"), cfg.find("E")
    lam = cfg.lam
    out = {}
    for c in mdp.states:
        succ = mdp.succ(c)
        tg = targets[c]
        na, ns = len(tg), len(succ)
        shaky = [cfg.shaky(t) for t in tg]
        r0 = np.zeros(na) if c == exit_ else -np.ones(na)
        if cfg.variant == "nominal" or not any(shaky):
            x = np.r_[_nominal_p(succ, tg), r0]
            out[c] = AmbiguitySet(na, ns, [box_set(x, x, na * ns, na)], state=c)
            continue
        lo, hi = cfg.support
        root = jump_set(succ, tg, shaky, start, lo, hi)
        if cfg.variant == "robust":
            sets = [root]
        elif cfg.variant == "dr_nested":
            sets = [jump_set(succ, tg, shaky, start, *cfg.inner, 1.0 - lam, 1.0), root]
        else:
            sets = [jump_set(succ, tg, shaky, start, *cfg.inner, 1.0 - lam, 1.0 - lam),
                    jump_set(succ, tg, shaky, start, *cfg.second, lam, lam), root]
        out[c] = AmbiguitySet(na, ns, sets, Q=1, state=c)
    return out


def maze_truth(cfg: MazeConfig, mdp: MdpSkeleton, targets: dict) -> GroundTruth:
    start, exit_ = cfg.find("S"), cfg.find("E")
    law = cfg.jump_law()
    laws = {}
    for c in mdp.states:
        if c == exit_:
            continue
        succ = mdp.succ(c)
        row = []
        for t in targets[c]:
            base = np.zeros(len(succ))
            base[succ.index(t)] = 1.0
            row.append(ActionLaw(-1.0, base, (start, law) if cfg.shaky(t) else None))
        laws[c] = row
    return GroundTruth(mdp, laws, frozenset([exit_]))


def generate_maze_problem(cfg: MazeConfig) -> BenchmarkInstance:
    """Uncertain maze for one strategy variant, plus the true jump law."""
    mdp, targets = maze_skeleton(cfg)
    amb = maze_ambiguity(cfg, mdp, targets)
    info = {"variant": cfg.variant, "lambda": cfg.lam, "gamma": cfg.gamma}
    return BenchmarkInstance(UncertainMdp(mdp, amb), maze_truth(cfg, mdp, targets), {}, info)


def shortest_exit_time(cfg: MazeConfig) -> int:
    """Breadth-first distance from start to exit ignoring jumps."""
    from collections import deque
    start, exit_ = cfg.find("S"), cfg.find("E")
    dist = {start: 0}
    q = deque([start])
    while q:
        c = q.popleft()
        if c == exit_:
            return dist[c]
        for a in MOVES:
            n = move(c, a, cfg.shape)
            if n not in dist:
                dist[n] = dist[c] + 1
                q.append(n)
    raise LayoutError("exit unreachable")
