# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: dilated KNN selection and max-relative aggregation.

Results must match ``_pykernels`` bit for bit, so distances accumulate in
feature-column order and the build disables floating-point contraction.
"""

import numpy as np
from libc.math cimport isfinite
from libc.stdint cimport int64_t

from .errors import NumericError


def dilated_knn(const double[:, ::1] x, Py_ssize_t k, Py_ssize_t d):
    cdef Py_ssize_t n = x.shape[0], dim = x.shape[1]
    cdef Py_ssize_t k_eff, m, stride
    if n - 1 >= k * d:
        k_eff, m, stride = k, k * d, d
    else:
        k_eff = min(k, n - 1)
        m, stride = k_eff, 1

    out = np.empty((n, k_eff), dtype=np.int64)
    cdef int64_t[:, ::1] nbrs = out
    cand_d_arr = np.empty(max(m, 1), dtype=np.float64)
    cand_i_arr = np.empty(max(m, 1), dtype=np.int64)
    cdef double[::1] cand_d = cand_d_arr
    cdef int64_t[::1] cand_i = cand_i_arr
    cdef Py_ssize_t i, j, c, cnt, pos, t
    cdef double acc, diff
    cdef bint bad = False

    for i in range(n):
        cnt = 0
        for j in range(n):
            if j == i:
                continue
            acc = 0.0
            for c in range(dim):
                diff = x[i, c] - x[j, c]
                acc = acc + diff * diff
            if not isfinite(acc):
                bad = True
                break
            if cnt < m:
                pos = cnt
                cnt += 1
            elif acc < cand_d[m - 1]:
                pos = m - 1
            else:
                continue
            # strict comparison: an equal distance stays behind the lower index
            while pos > 0 and cand_d[pos - 1] > acc:
                cand_d[pos] = cand_d[pos - 1]
                cand_i[pos] = cand_i[pos - 1]
                pos -= 1
            cand_d[pos] = acc
            cand_i[pos] = j
        if bad:
            break
        for t in range(k_eff):
            nbrs[i, t] = cand_i[t * stride]
    if bad:
        raise NumericError("non-finite pairwise distance")
    return out


def max_relative(const double[:, ::1] xp, const int64_t[:, ::1] nbrs):
    cdef Py_ssize_t n = xp.shape[0], dim = xp.shape[1], k = nbrs.shape[1]
    out_arr = np.empty((n, dim), dtype=np.float64)
    arg_arr = np.empty((n, dim), dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef int64_t[:, ::1] arg = arg_arr
    cdef Py_ssize_t i, c, t
    cdef int64_t j, bj
    cdef double v, best
    for i in range(n):
        for c in range(dim):
            bj = nbrs[i, 0]
            best = xp[bj, c] - xp[i, c]
            for t in range(1, k):
                j = nbrs[i, t]
                v = xp[j, c] - xp[i, c]
                if v > best:
                    best = v
                    bj = j
            out[i, c] = best
            arg[i, c] = bj
    return out_arr, arg_arr


def max_relative_backward(const double[:, ::1] dout, const int64_t[:, ::1] arg):
    cdef Py_ssize_t n = dout.shape[0], dim = dout.shape[1]
    dx_arr = np.empty((n, dim), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, c
    for i in range(n):
        for c in range(dim):
            dx[i, c] = -dout[i, c]
    for i in range(n):
        for c in range(dim):
            dx[arg[i, c], c] += dout[i, c]
    return dx_arr
