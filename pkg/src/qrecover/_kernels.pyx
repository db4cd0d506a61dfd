# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: partial trace gather, classical relative entropies, entropy sums."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log2, INFINITY

cnp.import_array()


def ptrace_offsets(const double complex[:, ::1] m, const cnp.int64_t[::1] kept,
                   const cnp.int64_t[::1] traced):
    cdef Py_ssize_t nk = kept.shape[0], nt = traced.shape[0]
    cdef Py_ssize_t i, j, r
    cdef cnp.int64_t ri, cj
    cdef double complex acc
    out = np.empty((nk, nk), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    for i in range(nk):
        for j in range(nk):
            acc = 0
            for r in range(nt):
                ri = kept[i] + traced[r]
                cj = kept[j] + traced[r]
                acc = acc + m[ri, cj]
            o[i, j] = acc
    return out


def entropy_bits(const double[::1] eigs, double cutoff):
    cdef Py_ssize_t i
    cdef double s = 0.0, lam
    for i in range(eigs.shape[0]):
        lam = eigs[i]
        if lam > cutoff:
            s -= lam * log2(lam)
    return s


def theorem5_terms(const double[::1] p, const double[::1] q, const double[:, ::1] t):
    """Return (D(P||Q), D(TP||TQ), D(P||RTP)) in bits for the transpose channel R(T, Q)."""
    cdef Py_ssize_t nu = t.shape[0], nx = t.shape[1]
    cdef Py_ssize_t u, x
    cdef double d_pq = 0.0, d_t = 0.0, d_r = 0.0, w
    tp_arr = np.zeros(nu)
    tq_arr = np.zeros(nu)
    cdef double[::1] tp = tp_arr
    cdef double[::1] tq = tq_arr
    for u in range(nu):
        for x in range(nx):
            tp[u] += t[u, x] * p[x]
            tq[u] += t[u, x] * q[x]
    for x in range(nx):
        if p[x] > 0.0:
            if q[x] <= 0.0:
                d_pq = INFINITY
            elif d_pq != INFINITY:
                d_pq += p[x] * log2(p[x] / q[x])
    for u in range(nu):
        if tp[u] > 0.0:
            if tq[u] <= 0.0:
                d_t = INFINITY
            elif d_t != INFINITY:
                d_t += tp[u] * log2(tp[u] / tq[u])
    for x in range(nx):
        if p[x] > 0.0:
            w = 0.0
            for u in range(nu):
                if tq[u] > 0.0:
                    w += t[u, x] * q[x] * tp[u] / tq[u]
                else:
                    w += q[x] * tp[u]
            if w <= 0.0:
                d_r = INFINITY
            elif d_r != INFINITY:
                d_r += p[x] * log2(p[x] / w)
    return d_pq, d_t, d_r
