# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment kernels; semantics mirror ``_fallback.py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, ceil, INFINITY

cnp.import_array()


def segment_sum(x, ptr):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef long long[::1] p = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef Py_ssize_t nseg = p.shape[0] - 1
    cdef Py_ssize_t d = xv.shape[1]
    out = np.zeros((nseg, d), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t s, r, j
    for s in range(nseg):
        for r in range(p[s], p[s + 1]):
            for j in range(d):
                ov[s, j] += xv[r, j]
    return out


def segment_max(x, ptr, active):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef long long[::1] p = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef unsigned char[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef Py_ssize_t nseg = p.shape[0] - 1
    cdef Py_ssize_t d = xv.shape[1]
    vals = np.zeros((nseg, d), dtype=np.float64)
    arg = np.full((nseg, d), -1, dtype=np.int64)
    cdef double[:, ::1] vv = vals
    cdef long long[:, ::1] av = arg
    cdef Py_ssize_t s, r, j
    for s in range(nseg):
        for r in range(p[s], p[s + 1]):
            if not act[r]:
                continue
            for j in range(d):
                if av[s, j] < 0 or xv[r, j] > vv[s, j]:
                    vv[s, j] = xv[r, j]
                    av[s, j] = r
    return vals, arg


def segment_softmax(x, ptr, active):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef long long[::1] p = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef unsigned char[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef Py_ssize_t nseg = p.shape[0] - 1
    out = np.zeros(xv.shape[0], dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t s, r
    cdef double mx, denom
    for s in range(nseg):
        mx = -INFINITY
        for r in range(p[s], p[s + 1]):
            if act[r] and xv[r] > mx:
                mx = xv[r]
        if mx == -INFINITY:
            continue
        denom = 0.0
        for r in range(p[s], p[s + 1]):
            if act[r]:
                ov[r] = exp(xv[r] - mx)
                denom += ov[r]
        for r in range(p[s], p[s + 1]):
            if act[r]:
                ov[r] = ov[r] / denom
    return out


cdef inline bint _before(double sa, Py_ssize_t a, double sb, Py_ssize_t b):
    # strict ranking order: higher score first, lower index on ties
    return sa > sb or (sa == sb and a < b)


def topk_select(scores, candidate, ptr, double ratio):
    cdef double[::1] sv = np.ascontiguousarray(scores, dtype=np.float64)
    cdef unsigned char[::1] cand = np.ascontiguousarray(candidate, dtype=np.uint8)
    cdef long long[::1] p = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef Py_ssize_t nseg = p.shape[0] - 1
    sel = np.zeros(sv.shape[0], dtype=bool)
    cdef cnp.npy_bool[::1] selv = sel
    cdef Py_ssize_t s, r, q, ncand, k, better
    for s in range(nseg):
        ncand = 0
        for r in range(p[s], p[s + 1]):
            if cand[r]:
                ncand += 1
        if ncand == 0:
            raise ValueError(f"graph {s} has no candidate nodes to pool")
        k = <Py_ssize_t>ceil(ratio * ncand - 1e-9)
        if k < 1:
            k = 1
        if k >= ncand:
            for r in range(p[s], p[s + 1]):
                selv[r] = cand[r]
            continue
        # rank by counting candidates ordered before r; segments are small
        for r in range(p[s], p[s + 1]):
            if not cand[r]:
                continue
            better = 0
            for q in range(p[s], p[s + 1]):
                if cand[q] and q != r and _before(sv[q], q, sv[r], r):
                    better += 1
                    if better >= k:
                        break
            selv[r] = better < k
    return sel


def sort_index(key, active, ptr, Py_ssize_t k):
    cdef double[::1] kv = np.ascontiguousarray(key, dtype=np.float64)
    cdef unsigned char[::1] act = np.ascontiguousarray(active, dtype=np.uint8)
    cdef long long[::1] p = np.ascontiguousarray(ptr, dtype=np.int64)
    cdef Py_ssize_t nseg = p.shape[0] - 1
    out = np.full((nseg, k), -1, dtype=np.int64)
    cdef long long[:, ::1] ov = out
    cdef Py_ssize_t s, r, q, rank
    for s in range(nseg):
        for r in range(p[s], p[s + 1]):
            if not act[r]:
                continue
            rank = 0
            for q in range(p[s], p[s + 1]):
                if act[q] and q != r and _before(kv[q], q, kv[r], r):
                    rank += 1
                    if rank >= k:
                        break
            if rank < k:
                ov[s, rank] = r
    return out
