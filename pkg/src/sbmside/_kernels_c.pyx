# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: BP message rounds and population-level pick sums.

Contracts mirror ``_kernels_py``; the splitmix64 pick stream is bit-identical
to the python backend by construction.
"""

import numpy as np

from libc.math cimport exp, log1p
from libc.stdint cimport int64_t, uint64_t

BACKEND = "compiled"

cdef uint64_t SM_GAMMA = 0x9E3779B97F4A7C15UL
cdef uint64_t SM_M1 = 0xBF58476D1CE4E5B9UL
cdef uint64_t SM_M2 = 0x94D049BB133111EBUL


cdef inline double msg_fn(double x, double ratio_m1, double nu) nogil:
    return log1p(ratio_m1 / (1.0 + exp(nu - x)))


cdef inline uint64_t pick(uint64_t seed, uint64_t k, uint64_t bound) nogil:
    cdef uint64_t z = seed ^ (k * SM_GAMMA)
    z = z + SM_GAMMA
    z ^= z >> 30
    z = z * SM_M1
    z ^= z >> 27
    z = z * SM_M2
    z ^= z >> 31
    return ((z >> 32) * bound) >> 32


def bp_rounds(const int64_t[::1] indptr, const int64_t[::1] rev, const double[::1] base,
              double ratio_m1, double nu, int rounds):
    """Synchronous message rounds plus belief pass; see _kernels_py.bp_rounds."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t n_edges = rev.shape[0]
    beliefs_arr = np.array(base, copy=True)
    msg_arr = np.zeros(n_edges)
    if n_edges == 0:
        return msg_arr, beliefs_arr
    nxt_arr = np.empty(n_edges)
    g_arr = np.empty(n_edges)
    s_arr = np.empty(n)
    cdef double[::1] msg_v = msg_arr
    cdef double[::1] nxt_v = nxt_arr
    cdef double[::1] g = g_arr
    cdef double[::1] s = s_arr
    cdef double[::1] beliefs = beliefs_arr
    cdef double* cur = &msg_v[0]
    cdef double* nxt = &nxt_v[0]
    cdef double* tmp
    cdef Py_ssize_t i, e
    cdef int r
    cdef double acc
    with nogil:
        for r in range(rounds):
            for e in range(n_edges):
                g[e] = msg_fn(cur[rev[e]], ratio_m1, nu)
            for i in range(n):
                acc = 0.0
                for e in range(indptr[i], indptr[i + 1]):
                    acc += g[e]
                s[i] = acc
            for i in range(n):
                for e in range(indptr[i], indptr[i + 1]):
                    nxt[e] = base[i] + s[i] - g[e]
            tmp = cur
            cur = nxt
            nxt = tmp
        for e in range(n_edges):
            g[e] = msg_fn(cur[rev[e]], ratio_m1, nu)
        for i in range(n):
            acc = 0.0
            for e in range(indptr[i], indptr[i + 1]):
                acc += g[e]
            beliefs[i] = base[i] + acc
    if rounds % 2 == 1:
        msg_arr, nxt_arr = nxt_arr, msg_arr
    return msg_arr, beliefs_arr


def pop_level_sum(const double[::1] pool, const int64_t[::1] counts, seed, double[::1] out):
    """Per-sample sums of uniform pool picks; see _kernels_py.pop_level_sum."""
    cdef uint64_t useed = <uint64_t> (int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef uint64_t bound = <uint64_t> pool.shape[0]
    cdef Py_ssize_t n = counts.shape[0]
    cdef Py_ssize_t i
    cdef int64_t j
    cdef uint64_t k = 0
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(counts[i]):
                acc += pool[<Py_ssize_t> pick(useed, k, bound)]
                k += 1
            out[i] += acc
    return np.asarray(out)
