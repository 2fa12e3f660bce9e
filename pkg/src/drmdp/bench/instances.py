"""Random instances for property tests and oracle campaigns."""
from __future__ import annotations

import numpy as np

from ..ambiguity import AmbiguitySet
from ..ambiguity.sets import box_set
from ..dp import UncertainMdp
from ..mdp import ActionSpace, Horizon, MdpSkeleton, StateSpace

GRID = 200  # probability bounds are multiples of 1/GRID


def _grid(x: float) -> float:
    return round(x * GRID) / GRID


def _shrink(lo, hi, free, rng, frac=(0.2, 0.6)):
    """Random box strictly inside ``[lo, hi]`` on the free coordinates.

    When the first two coordinates are free they form one transition row and
    the second mirrors the first, so the box keeps meeting the simplex.
    """
    lo2, hi2 = lo.copy(), hi.copy()
    tied = free[0] and free[1]
    for j in np.nonzero(free)[0]:
        if tied and j == 1:
            continue
        w = hi[j] - lo[j]
        size = w * rng.uniform(*frac)
        a = lo[j] + w * 0.05 + rng.uniform(0, w * 0.9 - size)
        lo2[j], hi2[j] = a, a + size
    if tied:
        lo2[1], hi2[1] = 1 - hi2[0], 1 - lo2[0]
    return lo2, hi2


def random_box_ambiguity(rng: np.random.Generator, n_actions: int = 2, uncertain_p: bool | None = None,
                         structure: str | None = None, state=None) -> AmbiguitySet:
    """Single-state set of at most three boxes over at most three free coordinates.

    Free coordinates are the rewards and, optionally, the first transition
    entry of action 0 (two successors, so the simplex ties the second entry).
    ``structure`` is ``"single"`` (support only), ``"pair"`` (one inner box),
    ``"chain"`` (two nested inner boxes) or ``"disjoint"`` (two disjoint
    inner boxes).
    """
    if uncertain_p is None:
        uncertain_p = bool(rng.integers(2)) and n_actions <= 2
    if structure is None:
        structure = rng.choice(["single", "pair", "chain", "disjoint"])
    ns = 2
    n_p, n_r = n_actions * ns, n_actions
    p0 = np.zeros(n_p)
    for a in range(n_actions):
        p0[a * ns + rng.integers(ns)] = 1.0
    lo = np.r_[p0, np.zeros(n_r)]
    hi = lo.copy()
    free = np.zeros(n_p + n_r, dtype=bool)
    c = rng.normal(size=n_r)
    w = rng.uniform(0.5, 2.0, size=n_r)
    lo[n_p:], hi[n_p:] = c - w, c + w
    free[n_p:] = True
    if uncertain_p:
        a, b = sorted(rng.uniform(0.05, 0.95, size=2))
        if b - a < 0.2:
            a, b = max(0.0, a - 0.1), min(1.0, b + 0.1)
        lo[0], hi[0], lo[1], hi[1] = a, b, 1 - b, 1 - a
        free[0] = free[1] = True
    support = box_set(lo, hi, n_p, n_r)
    if structure == "single":
        return AmbiguitySet(n_actions, ns, [support], state=state)
    sets = []
    if structure == "pair":
        l1, h1 = _shrink(lo, hi, free, rng)
        a = _grid(rng.uniform(0.05, 0.9))
        b = _grid(rng.uniform(a + 0.02, 1.0))
        sets.append(box_set(l1, h1, n_p, n_r, 0, a, b))
    elif structure == "chain":
        l2, h2 = _shrink(lo, hi, free, rng, (0.4, 0.7))
        l1, h1 = _shrink(l2, h2, free, rng, (0.3, 0.6))
        a1 = _grid(rng.uniform(0.05, 0.5))
        b1 = _grid(rng.uniform(a1 + 0.02, 0.7))
        a2 = _grid(rng.uniform(b1, 0.9))
        b2 = _grid(rng.uniform(a2 + 0.02, 1.0))
        sets += [box_set(l1, h1, n_p, n_r, 0, a1, b1, 1), box_set(l2, h2, n_p, n_r, 0, a2, b2)]
    else:
        # split one reward coordinate so the two inner boxes are disjoint
        j = n_p + int(rng.integers(n_r))
        mid = 0.5 * (lo[j] + hi[j])
        l_a, h_a = _shrink(lo, hi, free, rng)
        l_b, h_b = _shrink(lo, hi, free, rng)
        l_a[j], h_a[j] = lo[j] + 0.1 * (mid - lo[j]), mid - 0.1 * (mid - lo[j])
        l_b[j], h_b[j] = mid + 0.1 * (hi[j] - mid), hi[j] - 0.1 * (hi[j] - mid)
        a1 = _grid(rng.uniform(0.05, 0.45))
        b1 = _grid(rng.uniform(a1 + 0.02, 0.6))
        a2 = _grid(rng.uniform(0.0, 0.9 - b1))
        b2 = _grid(rng.uniform(a2 + 0.02, 1.0 - a1))
        sets += [box_set(l_a, h_a, n_p, n_r, 0, a1, b1), box_set(l_b, h_b, n_p, n_r, 0, a2, b2)]
    sets.append(support)
    return AmbiguitySet(n_actions, ns, sets, state=state)


def random_continuation(rng: np.random.Generator, amb: AmbiguitySet, scale: float = 1.0) -> np.ndarray:
    V = np.zeros((amb.n_p, amb.n_actions))
    ns = amb.n_succ
    for a in range(amb.n_actions):
        V[a * ns:(a + 1) * ns, a] = scale * rng.normal(size=ns)
    return V


def random_uncertain_mdp(rng: np.random.Generator, n_states: int = 4, n_actions: int = 2,
                         gamma: float = 0.9, structure: str | None = "pair",
                         support_only: bool = False) -> UncertainMdp:
    """Infinite-horizon MDP where every state has box ambiguity on rewards and transitions.

    Transitions vary inside a box of half-width up to 0.1 per entry around a
    random interior nominal row; the set machinery intersects it with the simplex.
    """
    states = tuple(range(n_states))
    succ = {s: states for s in states}
    mdp = MdpSkeleton(StateSpace(states, {s: 1 for s in states}, 0),
                      ActionSpace({s: tuple(range(n_actions)) for s in states}),
                      Horizon("infinite", gamma), succ)
    n_p, n_r = n_actions * n_states, n_actions
    amb = {}
    for s in states:
        p0 = rng.dirichlet(np.full(n_states, 2.0), size=n_actions).ravel()
        rad = np.minimum(rng.uniform(0.02, 0.1, size=n_p), 0.5 * np.minimum(p0, 1 - p0))
        r0 = rng.normal(size=n_r)
        rw = rng.uniform(0.2, 1.0, size=n_r)
        lo, hi = np.r_[p0 - rad, r0 - rw], np.r_[p0 + rad, r0 + rw]
        sets = []
        if not support_only and structure == "pair":
            # inner box around the nominal point, strictly inside the support
            lo1, hi1 = np.r_[p0 - 0.5 * rad, r0 - 0.5 * rw], np.r_[p0 + 0.5 * rad, r0 + 0.5 * rw]
            a = _grid(rng.uniform(0.2, 0.8))
            sets.append(box_set(lo1, hi1, n_p, n_r, 0, a, min(1.0, a + 0.1)))
        sets.append(box_set(lo, hi, n_p, n_r))
        amb[s] = AmbiguitySet(n_actions, n_states, sets, state=s)
    return UncertainMdp(mdp, amb)


EXAMPLE_KINDS = ("mean", "mean_cov", "mad", "huber")


def random_example(rng: np.random.Generator, kind: str, n_actions: int = 2, n_succ: int = 3,
                   variant: int = 0):
    """Random data for one lifted example.

    Returns ``(amb, V, data)`` where ``amb`` is the generic lifted set and
    ``data`` the keyword arguments of the specialized program.  ``variant``
    selects the pinned-mean (0) or boxed-mean (1) covariance form and the
    unbounded (0) or boxed (1) absolute-deviation form.
    """
    from ..ambiguity.lifting import lift_huber, lift_mad, lift_mean, lift_mean_covariance
    from ..cones import NonNegative
    from ..mdp import build_continuation_matrix

    na, ns = n_actions, n_succ
    p0 = rng.dirichlet(np.ones(ns), size=na)
    V = build_continuation_matrix(3.0 * rng.normal(size=ns), na, 0.9)
    if kind == "mean":
        r0 = rng.normal(size=na)
        G = rng.normal(size=(2, na * ns))
        f = G @ rng.dirichlet(np.ones(ns), size=na).ravel() + rng.uniform(0.05, 0.3, size=2)
        return lift_mean(G, f, NonNegative(2), r0, ns), V, dict(V=V, r0=r0, G=G, f=f, K=NonNegative(2))
    if kind == "mean_cov":
        m = rng.normal(size=na)
        L = rng.normal(size=(na, na))
        S = L @ L.T + 0.1 * np.eye(na)
        if variant == 0:
            return lift_mean_covariance(p0, S, m=m), V, dict(V=V, p0=p0, Sigma=S, m=m)
        Gm = np.vstack([np.eye(na), -np.eye(na)])
        fm = np.r_[m + rng.uniform(0.1, 0.4, na), -(m - rng.uniform(0.1, 0.4, na))]
        return (lift_mean_covariance(p0, S, G_mean=Gm, f_mean=fm, m0=m), V,
                dict(V=V, p0=p0, Sigma=S, G_mean=Gm, f_mean=fm, m0=m))
    if kind == "mad":
        m = rng.normal(size=na)
        f = rng.uniform(0.0, 1.0, size=na)
        if variant == 0:
            return lift_mad(p0, m, f), V, dict(V=V, p0=p0, m=m, f=f)
        lo, hi = m - rng.uniform(1, 3, na), m + rng.uniform(1, 3, na)
        return lift_mad(p0, m, f, lo, hi), V, dict(V=V, p0=p0, m=m, f=f, lo=lo, hi=hi)
    if kind == "huber":
        f = rng.uniform(0.2, 1.5, size=na)
        g = float(rng.uniform(0.1, 2.0))
        delta = float(rng.choice([0.5, 1.0, 2.0]))
        return lift_huber(p0, f, g, delta), V, dict(V=V, p0=p0, f=f, g=g, delta=delta)
    raise ValueError(f"unknown example kind {kind!r}")
