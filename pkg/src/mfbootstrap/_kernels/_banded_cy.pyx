# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled banded kernels; same storage convention as ``_banded_py``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, sqrt

BACKEND = "cython"


def cholesky_banded_lower(ab):
    ab = np.ascontiguousarray(ab, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] lb = ab.copy()
    cdef double[:, ::1] L = lb
    cdef Py_ssize_t bw = lb.shape[0] - 1
    cdef Py_ssize_t n = lb.shape[1]
    cdef Py_ssize_t j, c, i, stop, cmin
    cdef double ljc, piv, s
    for j in range(n):
        cmin = j - bw
        if cmin < 0:
            cmin = 0
        for c in range(cmin, j):
            ljc = L[j - c, c]
            if ljc == 0.0:
                continue
            stop = c + bw
            if stop > n - 1:
                stop = n - 1
            stop -= j
            for i in range(stop + 1):
                L[i, j] -= ljc * L[j - c + i, c]
        piv = L[0, j]
        if not piv > 0.0 or not isfinite(piv):
            return lb, j + 1
        s = sqrt(piv)
        L[0, j] = s
        stop = j + bw
        if stop > n - 1:
            stop = n - 1
        stop -= j
        for i in range(1, stop + 1):
            L[i, j] /= s
    return lb, 0


def forward_solve_banded(lb, b):
    cdef const double[:, ::1] L = np.ascontiguousarray(lb, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.array(b, dtype=np.float64, copy=True)
    cdef double[::1] x = out
    cdef Py_ssize_t bw = L.shape[0] - 1
    cdef Py_ssize_t n = L.shape[1]
    cdef Py_ssize_t j, i, stop
    cdef double xj
    for j in range(n):
        x[j] /= L[0, j]
        xj = x[j]
        stop = bw
        if stop > n - 1 - j:
            stop = n - 1 - j
        for i in range(1, stop + 1):
            x[j + i] -= xj * L[i, j]
    return out


def banded_lower_matvec(lb, x):
    cdef const double[:, ::1] L = np.ascontiguousarray(lb, dtype=np.float64)
    cdef const double[::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t bw = L.shape[0] - 1
    cdef Py_ssize_t n = L.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t r, k, kmax
    cdef double acc
    for r in range(n):
        kmax = bw
        if kmax > r:
            kmax = r
        acc = 0.0
        for k in range(kmax + 1):
            acc += L[k, r - k] * v[r - k]
        y[r] = acc
    return out


def banded_symmetric_matvec(ab, x):
    cdef const double[:, ::1] A = np.ascontiguousarray(ab, dtype=np.float64)
    cdef const double[::1] v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t bw = A.shape[0] - 1
    cdef Py_ssize_t n = A.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef Py_ssize_t r, k, kmax
    cdef double acc
    for r in range(n):
        kmax = bw
        if kmax > r:
            kmax = r
        acc = 0.0
        # row r, columns r-k (lower half incl. diagonal)
        for k in range(kmax + 1):
            acc += A[k, r - k] * v[r - k]
        # columns r+k (upper half via symmetry)
        kmax = bw
        if kmax > n - 1 - r:
            kmax = n - 1 - r
        for k in range(1, kmax + 1):
            acc += A[k, r] * v[r + k]
        y[r] = acc
    return out
