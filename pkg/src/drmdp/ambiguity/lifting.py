"""Lifted ambiguity sets for mean, covariance, absolute-deviation and Huber information.

Each constructor adds auxiliary coordinates ``u`` so that a nonlinear
distributional statement becomes linear in the lifted space: ``u`` is tied to
``(p, r)`` by the support set and its expectation is fixed by a moment
equality.  Auxiliary coordinates are unbounded above on purpose; only the
``(p, r)`` part of the support needs to be bounded.  Sets whose ``(p, r)``
part is itself unbounded (covariance and Huber information without a
support box) are valid for the dual program but fail the boundedness check,
so they are solved with ``check=False``.
"""
from __future__ import annotations

import numpy as np

from ..cones import Cone, NonNegative, PositiveSemidefinite, Product, RotatedSecondOrder, Zero, svec_index
from .sets import AmbiguityError, AmbiguitySet, MomentConstraints, make_set


def _pin_rows(n: int, offset: int, N: int, values) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``x[offset:offset+n] == values`` in slack form."""
    M = np.zeros((n, N))
    M[:, offset:offset + n] = np.eye(n)
    return M, np.asarray(values, dtype=float).ravel()


def _assemble(na: int, ns: int, Q: int, blocks: list[tuple[np.ndarray, np.ndarray, Cone]],
              moments: MomentConstraints, state=None) -> AmbiguitySet:
    n_p, n_r = na * ns, na
    M = np.vstack([b[0] for b in blocks])
    rhs = np.concatenate([b[1] for b in blocks])
    cone = Product(*[b[2] for b in blocks])
    root = make_set(n_p, n_r, Q, rhs, cone, M[:, :n_p], M[:, n_p:n_p + n_r], M[:, n_p + n_r:])
    return AmbiguitySet(na, ns, [root], moments, Q, state)


def _p0_rows(p0, na: int, N: int):
    p0 = np.asarray(p0, dtype=float).reshape(na, -1)
    ns = p0.shape[1]
    M, b = _pin_rows(na * ns, 0, N, p0)
    return ns, (M, b, Zero(na * ns))


def lift_mean(G, f, K: Cone, r0, n_succ: int, state=None) -> AmbiguitySet:
    """Transition law known through ``G E[p] <=_K f``; rewards fixed at ``r0``.

    Lifted form: ``G p <=_K u`` almost surely and ``E[u] = f``.
    """
    r0 = np.atleast_1d(np.asarray(r0, dtype=float))
    na, ns = len(r0), int(n_succ)
    n_p = na * ns
    G = np.atleast_2d(np.asarray(G, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if G.shape != (len(f), n_p) or K.size != len(f):
        raise AmbiguityError("lift_mean: G must be len(f) x (actions * successors) and K of size len(f)")
    Q = len(f)
    N = n_p + na + Q
    # u - G p in K   <=>   0 - (G p - u) in K
    M_k = np.zeros((Q, N))
    M_k[:, :n_p] = G
    M_k[:, n_p + na:] = -np.eye(Q)
    Mr, br = _pin_rows(na, n_p, N, r0)
    moments = MomentConstraints.make(n_p, na, Q, f, H=np.eye(Q))
    return _assemble(na, ns, Q, [(M_k, np.zeros(Q), K), (Mr, br, Zero(na))], moments, state)


def lift_mean_covariance(p0, Sigma, m=None, G_mean=None, f_mean=None, m0=None, state=None) -> AmbiguitySet:
    """Rewards with second moment about ``m0`` bounded by ``Sigma``; transitions fixed at ``p0``.

    Either the mean is pinned (``m``, which is then also the centre) or it is
    boxed by ``G_mean E[r] <= f_mean`` around the centre ``m0``.  The lifted
    coordinates hold a full matrix ``U`` (row-major) with ``E[U] = Sigma`` and

        [[1, (r - m0)'], [r - m0, U]]  PSD  almost surely.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    na = Sigma.shape[0]
    if Sigma.shape != (na, na) or not np.allclose(Sigma, Sigma.T, atol=1e-12):
        raise AmbiguityError("Sigma must be a symmetric square matrix")
    if np.linalg.eigvalsh(Sigma)[0] < -1e-8:
        raise AmbiguityError("Sigma is not positive semidefinite")
    if m is None and (G_mean is None or f_mean is None or m0 is None):
        raise AmbiguityError("give either the mean m or a mean box (G_mean, f_mean) with a centre m0")
    center = np.asarray(m if m is not None else m0, dtype=float)
    nU = na * na
    Qg = 0 if m is not None else len(np.atleast_1d(f_mean))
    Q = nU + Qg
    p0 = np.asarray(p0, dtype=float).reshape(na, -1)
    ns = p0.shape[1]
    n_p = na * ns
    N = n_p + na + Q
    uoff = n_p + na
    blocks = [_p0_rows(p0, na, N)[1]]
    nY = na + 1
    sY = nY * (nY + 1) // 2
    M_psd = np.zeros((sY, N))
    b_psd = np.zeros(sY)
    b_psd[svec_index(nY, 0, 0)] = 1.0
    s2 = np.sqrt(2.0)
    for a in range(na):
        k = svec_index(nY, a + 1, 0)
        M_psd[k, n_p + a] = -s2          # slack entry is sqrt2 * (r_a - m0_a)
        b_psd[k] = -s2 * center[a]
        for c in range(a + 1):
            k = svec_index(nY, a + 1, c + 1)
            M_psd[k, uoff + a * na + c] = -(1.0 if a == c else s2)
    blocks.append((M_psd, b_psd, PositiveSemidefinite(nY)))
    Gm_rows, Hm_rows, c = [], [], []
    for a in range(na):
        for b_ in range(na):
            h = np.zeros(Q)
            h[a * na + b_] = 1.0
            Gm_rows.append(np.zeros(na))
            Hm_rows.append(h)
            c.append(Sigma[a, b_])
    if m is not None:
        for a in range(na):
            g = np.zeros(na)
            g[a] = 1.0
            Gm_rows.append(g)
            Hm_rows.append(np.zeros(Q))
            c.append(float(center[a]))
    else:
        Gb = np.atleast_2d(np.asarray(G_mean, dtype=float))
        fb = np.atleast_1d(np.asarray(f_mean, dtype=float))
        # u_g - G_mean r >= 0
        M_box = np.zeros((Qg, N))
        M_box[:, n_p:n_p + na] = Gb
        M_box[:, uoff + nU:] = -np.eye(Qg)
        blocks.append((M_box, np.zeros(Qg), NonNegative(Qg)))
        for j in range(Qg):
            h = np.zeros(Q)
            h[nU + j] = 1.0
            Gm_rows.append(np.zeros(na))
            Hm_rows.append(h)
            c.append(fb[j])
    moments = MomentConstraints.make(n_p, na, Q, c, np.zeros((len(c), n_p)), np.array(Gm_rows),
                                     np.array(Hm_rows))
    return _assemble(na, ns, Q, blocks, moments, state)


def lift_mad(p0, m, f, lo=None, hi=None, state=None) -> AmbiguitySet:
    """Rewards with ``E|r_a - m_a| = f_a`` via ``u >= r - m``, ``u >= m - r``, ``E[u] = f``.

    The optional box ``[lo, hi]`` bounds the rewards.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if np.any(f < 0):
        raise AmbiguityError("mean absolute deviation must be nonnegative")
    na = len(m)
    p0 = np.asarray(p0, dtype=float).reshape(na, -1)
    ns = p0.shape[1]
    n_p, Q = na * ns, na
    N = n_p + na + Q
    I = np.eye(na)
    blocks = [_p0_rows(p0, na, N)[1]]
    up = np.zeros((na, N))       # u - r + m >= 0  ->  slack m - (r - u)
    up[:, n_p:n_p + na] = I
    up[:, n_p + na:] = -I
    dn = np.zeros((na, N))       # u + r - m >= 0  ->  slack -m - (-r - u)
    dn[:, n_p:n_p + na] = -I
    dn[:, n_p + na:] = -I
    blocks.append((np.vstack([up, dn]), np.concatenate([m, -m]), NonNegative(2 * na)))
    if lo is not None or hi is not None:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        bx = np.zeros((2 * na, N))
        bx[:na, n_p:n_p + na] = I
        bx[na:, n_p:n_p + na] = -I
        blocks.append((bx, np.concatenate([hi, -lo]), NonNegative(2 * na)))
    moments = MomentConstraints.make(n_p, na, Q, f, H=I)
    return _assemble(na, ns, Q, blocks, moments, state)


HUBER_AUX = ("u", "v", "w", "s", "t")


def lift_huber(p0, f, g: float, delta: float, state=None) -> AmbiguitySet:
    """Rewards with ``E[huber_delta(f @ r)] <= g``.

    Auxiliaries ``(u, v, w, s, t)``: ``f @ r = u - v`` with ``u, v >= 0``,
    ``0 <= s <= u``, ``0 <= t <= v`` and

        w >= (s**2 + t**2) / 2 + delta (u - s) + delta (v - t),

    a rotated second-order cone; the minimum of the right-hand side over
    admissible splits is exactly the Huber loss.  ``E[w] = g``.
    """
    if delta <= 0:
        raise AmbiguityError("Huber threshold delta must be positive")
    if g < 0:
        raise AmbiguityError("Huber loss budget g must be nonnegative")
    f = np.atleast_1d(np.asarray(f, dtype=float))
    na = len(f)
    p0 = np.asarray(p0, dtype=float).reshape(na, -1)
    ns = p0.shape[1]
    n_p, Q = na * ns, 5
    N = n_p + na + Q
    o = n_p + na
    iu, iv, iw, is_, it = (o + k for k in range(5))
    blocks = [_p0_rows(p0, na, N)[1]]
    split = np.zeros((1, N))          # f @ r - u + v == 0
    split[0, n_p:n_p + na] = f
    split[0, iu], split[0, iv] = -1.0, 1.0
    blocks.append((split, np.zeros(1), Zero(1)))
    ineq = []
    for pos, neg in ((iu, None), (iv, None), (is_, None), (it, None), (iu, is_), (iv, it)):
        row = np.zeros(N)             # x_pos - x_neg >= 0 -> slack 0 - (-x_pos + x_neg)
        row[pos] = -1.0
        if neg is not None:
            row[neg] = 1.0
        ineq.append(row)
    blocks.append((np.array(ineq), np.zeros(len(ineq)), NonNegative(len(ineq))))
    cone_rows = np.zeros((4, N))
    cone_b = np.zeros(4)
    # first entry: w - delta u + delta s - delta v + delta t
    cone_rows[0, iw], cone_rows[0, iu], cone_rows[0, is_] = -1.0, delta, -delta
    cone_rows[0, iv], cone_rows[0, it] = delta, -delta
    cone_b[1] = 1.0
    cone_rows[2, is_] = -1.0
    cone_rows[3, it] = -1.0
    blocks.append((cone_rows, cone_b, RotatedSecondOrder(4)))
    H = np.zeros((1, Q))
    H[0, 2] = 1.0
    moments = MomentConstraints.make(n_p, na, Q, [g], H=H)
    return _assemble(na, ns, Q, blocks, moments, state)


def huber(y, delta: float):
    y = np.abs(np.asarray(y, dtype=float))
    return np.where(y <= delta, 0.5 * y * y, delta * (y - 0.5 * delta))


def nested_intervals(levels, n_actions: int, n_succ: int, p0, state=None) -> AmbiguitySet:
    """Boxes over the rewards, transitions fixed at ``p0``, each nested in the next.

    ``levels`` is a list of ``(lo, hi, prob_lo, prob_hi)`` reward boxes from
    innermost to the support.
    """
    from .sets import box_set
    p0 = np.asarray(p0, dtype=float).ravel()
    n_p = n_actions * n_succ
    sets = []
    for k, (lo, hi, a, b) in enumerate(levels):
        parent = k + 1 if k + 1 < len(levels) else None
        sets.append(box_set(np.r_[p0, lo], np.r_[p0, hi], n_p, n_actions, 0, a, b, parent))
    return AmbiguitySet(n_actions, n_succ, sets, state=state)


def disjoint_intervals(inner, support, n_actions: int, n_succ: int, p0, state=None) -> AmbiguitySet:
    """Pairwise disjoint reward boxes ``inner`` directly under the ``support`` box."""
    from .sets import box_set
    p0 = np.asarray(p0, dtype=float).ravel()
    n_p = n_actions * n_succ
    sets = [box_set(np.r_[p0, lo], np.r_[p0, hi], n_p, n_actions, 0, a, b, None) for lo, hi, a, b in inner]
    lo, hi = support
    sets.append(box_set(np.r_[p0, lo], np.r_[p0, hi], n_p, n_actions))
    return AmbiguitySet(n_actions, n_succ, sets, state=state)
