# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for assignment enumeration and batch re-assignment."""
from math import comb

import numpy as np

cimport numpy as cnp

cnp.import_array()


def combination_moments(const double[::1] a, const double[::1] b, Py_ssize_t k):
    cdef Py_ssize_t n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError("a and b must have equal length")
    if k < 0 or k > n:
        raise ValueError("k must lie in [0, n]")
    cdef Py_ssize_t count = comb(n, k)
    sa_arr = np.empty(count, dtype=np.float64)
    qa_arr = np.empty(count, dtype=np.float64)
    sb_arr = np.empty(count, dtype=np.float64)
    qb_arr = np.empty(count, dtype=np.float64)
    cdef double[::1] sa = sa_arr, qa = qa_arr, sb = sb_arr, qb = qb_arr
    cdef double btot = 0.0, bsq = 0.0, v, w, s, q, t, u
    cdef Py_ssize_t i, j, c
    for i in range(n):
        btot += b[i]
        bsq += b[i] * b[i]
    idx_arr = np.arange(k, dtype=np.intp)
    cdef Py_ssize_t[::1] idx = idx_arr
    for c in range(count):
        s = 0.0
        q = 0.0
        t = 0.0
        u = 0.0
        for j in range(k):
            v = a[idx[j]]
            w = b[idx[j]]
            s += v
            q += v * v
            t += w
            u += w * w
        sa[c] = s
        qa[c] = q
        sb[c] = btot - t
        qb[c] = bsq - u
        i = k - 1
        while i >= 0 and idx[i] == i + n - k:
            i -= 1
        if i < 0:
            break
        idx[i] += 1
        for j in range(i + 1, k):
            idx[j] = idx[j - 1] + 1
    return sa_arr, qa_arr, sb_arr, qb_arr


def batch_moments(const double[::1] a, const double[::1] b, const signed char[:, ::1] d):
    cdef Py_ssize_t reps = d.shape[0], n = d.shape[1]
    if a.shape[0] != n or b.shape[0] != n:
        raise ValueError("outcome length does not match assignment width")
    n1_arr = np.empty(reps, dtype=np.int64)
    sa_arr = np.empty(reps, dtype=np.float64)
    qa_arr = np.empty(reps, dtype=np.float64)
    sb_arr = np.empty(reps, dtype=np.float64)
    qb_arr = np.empty(reps, dtype=np.float64)
    cdef cnp.int64_t[::1] n1 = n1_arr
    cdef double[::1] sa = sa_arr, qa = qa_arr, sb = sb_arr, qb = qb_arr
    cdef Py_ssize_t r, i
    cdef cnp.int64_t m
    cdef double s, q, t, u, f, btot = 0.0, bsq = 0.0
    # branchless: the 0/1 pattern is random, so a data-dependent branch mispredicts
    a2_arr = np.empty(n, dtype=np.float64)
    b2_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] a2 = a2_arr, b2 = b2_arr
    for i in range(n):
        a2[i] = a[i] * a[i]
        b2[i] = b[i] * b[i]
        btot += b[i]
        bsq += b2[i]
    for r in range(reps):
        m = 0
        s = 0.0
        q = 0.0
        t = 0.0
        u = 0.0
        for i in range(n):
            f = d[r, i]
            m += d[r, i]
            s += f * a[i]
            q += f * a2[i]
            t += f * b[i]
            u += f * b2[i]
        n1[r] = m
        sa[r] = s
        qa[r] = q
        sb[r] = btot - t
        qb[r] = bsq - u
    return n1_arr, sa_arr, qa_arr, sb_arr, qb_arr
