# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled disc-sum kernel; same contract as czlab._kernels_py.disc_sum_map."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def disc_sum_map(values, halfwidths):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hw = np.ascontiguousarray(halfwidths, dtype=np.int64)
    cdef Py_ssize_t n0 = vals.shape[0]
    cdef Py_ssize_t n1 = vals.shape[1]
    cdef Py_ssize_t k = hw.shape[0] - 1

    cdef cnp.ndarray[cnp.float64_t, ndim=2] prefix = np.zeros((n0, n1 + 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((n0, n1))

    cdef Py_ssize_t i, j, dy, ii, lo, hi, w
    cdef double acc

    for i in range(n0):
        acc = 0.0
        for j in range(n1):
            acc += vals[i, j]
            prefix[i, j + 1] = acc

    for i in range(n0):
        for dy in range(-k, k + 1):
            ii = i + dy
            if ii < 0 or ii >= n0:
                continue
            w = hw[dy if dy >= 0 else -dy]
            for j in range(n1):
                lo = j - w
                if lo < 0:
                    lo = 0
                hi = j + w + 1
                if hi > n1:
                    hi = n1
                out[i, j] += prefix[ii, hi] - prefix[ii, lo]
    return out
