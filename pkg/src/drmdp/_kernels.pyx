# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled episode simulator; mirrors ``_kernels_py.run_batch`` draw for draw."""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_uniform

cnp.import_array()


cdef inline double _mixture(bitgen_t* g, int k, const double[:] w, const double[:] m,
                            const double[:] s) noexcept nogil:
    cdef int j = 0, c
    cdef double u, acc
    if k > 1:
        u = random_standard_uniform(g)
        acc = 0.0
        j = k - 1
        for c in range(k):
            acc += w[c]
            if u < acc:
                j = c
                break
    if s[j] > 0.0:
        return m[j] + s[j] * random_standard_normal(g)
    return m[j]


def run_batch(bitgens, dict t, long cap):
    """Simulate one episode per bit generator; returns (returns, steps, capped)."""

    cdef Py_ssize_t n = len(bitgens), run
    rets_a = np.zeros(n)
    steps_a = np.zeros(n, dtype=np.int64)
    capped_a = np.zeros(n, dtype=np.uint8)
    cdef double[:] rets = rets_a
    cdef long long[:] steps = steps_a
    cdef unsigned char[:] capped = capped_a
    cdef const long long[:] off = np.ascontiguousarray(t["offsets"], dtype=np.int64)
    cdef const double[:] pol = np.ascontiguousarray(t["policy"], dtype=float)
    cdef const unsigned char[:] pol_rand = np.ascontiguousarray(t["policy_random"], dtype=np.uint8)
    cdef const unsigned char[:] terminal = np.ascontiguousarray(t["terminal"], dtype=np.uint8)
    cdef double gamma = float(t["gamma"])
    cdef const long long[:, :] succ = np.ascontiguousarray(t["succ"], dtype=np.int64)
    cdef const double[:, :] prob = np.ascontiguousarray(t["prob"], dtype=float)
    cdef const long long[:] nsucc = np.ascontiguousarray(t["nsucc"], dtype=np.int64)
    cdef const unsigned char[:] base_rand = np.ascontiguousarray(t["base_random"], dtype=np.uint8)
    cdef const long long[:] rk = np.ascontiguousarray(t["rew_k"], dtype=np.int64)
    cdef const double[:, :] rw = np.ascontiguousarray(t["rew_w"], dtype=float)
    cdef const double[:, :] rm = np.ascontiguousarray(t["rew_m"], dtype=float)
    cdef const double[:, :] rs = np.ascontiguousarray(t["rew_s"], dtype=float)
    cdef const long long[:] jto = np.ascontiguousarray(t["jump_to"], dtype=np.int64)
    cdef const long long[:] jk = np.ascontiguousarray(t["jump_k"], dtype=np.int64)
    cdef const double[:, :] jw = np.ascontiguousarray(t["jump_w"], dtype=float)
    cdef const double[:, :] jm = np.ascontiguousarray(t["jump_m"], dtype=float)
    cdef const double[:, :] js = np.ascontiguousarray(t["jump_s"], dtype=float)
    cdef long long initial = int(t["initial"])
    cdef bitgen_t* g
    cdef long long s, sa, nxt, a, b, na, k, ns, st
    cdef double ret, disc, u, acc, r, theta
    capsule_name = b"BitGenerator"
    for run in range(n):
        capsule = bitgens[run].capsule
        g = <bitgen_t*> PyCapsule_GetPointer(capsule, capsule_name)
        with bitgens[run].lock, nogil:
            s = initial
            ret = 0.0
            disc = 1.0
            st = 0
            while not terminal[s]:
                if st >= cap:
                    capped[run] = 1
                    break
                na = off[s + 1] - off[s]
                a = 0
                if pol_rand[s]:
                    u = random_standard_uniform(g)
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
                r = _mixture(g, <int> rk[sa], rw[sa], rm[sa], rs[sa])
                ret += disc * r
                disc *= gamma
                st += 1
                ns = nsucc[sa]
                nxt = succ[sa, 0]
                if base_rand[sa]:
                    u = random_standard_uniform(g)
                    acc = 0.0
                    nxt = succ[sa, ns - 1]
                    for k in range(ns):
                        acc += prob[sa, k]
                        if u < acc:
                            nxt = succ[sa, k]
                            break
                if jto[sa] >= 0:
                    theta = _mixture(g, <int> jk[sa], jw[sa], jm[sa], js[sa])
                    if theta < 0.0:
                        theta = 0.0
                    elif theta > 1.0:
                        theta = 1.0
                    if random_standard_uniform(g) < theta:
                        nxt = jto[sa]
                s = nxt
            rets[run] = ret
            steps[run] = st
    return rets_a, steps_a, capped_a
