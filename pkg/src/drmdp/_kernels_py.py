"""Pure-Python episode simulator (reference implementation of the compiled kernel).

Draw order per step, shared with the compiled kernel so both produce
identical streams:

1. one uniform to pick the action, only when the policy row is randomized;
2. the reward: one uniform for the component when the law has more than
   one component, then one standard normal when that component has a
   positive standard deviation;
3. one uniform to pick the successor, only when the base transition row has
   more than one positive entry;
4. when the action carries a jump: the jump probability drawn like the
   reward (then clipped to [0, 1]) and one uniform for the jump decision.
"""
from __future__ import annotations

import numpy as np


def _mixture(g, k, w, m, s):
    j = 0
    if k > 1:
        u = g.random()
        acc = 0.0
        j = k - 1
        for c in range(k):
            acc += w[c]
            if u < acc:
                j = c
                break
    if s[j] > 0.0:
        return m[j] + s[j] * g.standard_normal()
    return m[j]


def run_batch(bitgens, t, cap: int):
    """Simulate one episode per bit generator; returns (returns, steps, capped)."""
    generators = [np.random.Generator(b) for b in bitgens]
    n = len(generators)
    rets = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    capped = np.zeros(n, dtype=np.uint8)
    off, pol, pol_rand = t["offsets"], t["policy"], t["policy_random"]
    terminal, gamma = t["terminal"], float(t["gamma"])
    succ, prob, nsucc, base_rand = t["succ"], t["prob"], t["nsucc"], t["base_random"]
    rk, rw, rm, rs = t["rew_k"], t["rew_w"], t["rew_m"], t["rew_s"]
    jto, jk, jw, jm, js = t["jump_to"], t["jump_k"], t["jump_w"], t["jump_m"], t["jump_s"]
    for run in range(n):
        g = generators[run]
        s = int(t["initial"])
        ret, disc, st = 0.0, 1.0, 0
        while not terminal[s]:
            if st >= cap:
                capped[run] = 1
                break
            na = off[s + 1] - off[s]
            a = 0
            if pol_rand[s]:
                u = g.random()
                acc = 0.0
                a = na - 1
                for b in range(na):
                    acc += pol[off[s] + b]
                    if u < acc:
                        a = b
                        break
            else:
                for b in range(na):
                    if pol[off[s] + b] > 0.5:
                        a = b
                        break
            sa = off[s] + a
            r = _mixture(g, rk[sa], rw[sa], rm[sa], rs[sa])
            ret += disc * r
            disc *= gamma
            st += 1
            ns = nsucc[sa]
            nxt = succ[sa, 0]
            if base_rand[sa]:
                u = g.random()
                acc = 0.0
                nxt = succ[sa, ns - 1]
                for k in range(ns):
                    acc += prob[sa, k]
                    if u < acc:
                        nxt = succ[sa, k]
                        break
            if jto[sa] >= 0:
                theta = _mixture(g, jk[sa], jw[sa], jm[sa], js[sa])
                theta = min(1.0, max(0.0, theta))
                if g.random() < theta:
                    nxt = jto[sa]
            s = int(nxt)
        rets[run] = ret
        steps[run] = st
    return rets, steps, capped
