# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the serial recursions in :mod:`epe.kernels`."""
import numpy as np


def lti_propagate(const double[:, ::1] A, const double[:, ::1] W, const double[::1] x0):
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t m = W.shape[0]
    cdef Py_ssize_t k, i, j
    cdef double s
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] X = out
    if m == 0:
        return out
    with nogil:
        for i in range(n):
            s = W[0, i]
            for j in range(n):
                s = s + A[i, j] * x0[j]
            X[0, i] = s
        for k in range(1, m):
            for i in range(n):
                s = W[k, i]
                for j in range(n):
                    s = s + A[i, j] * X[k - 1, j]
                X[k, i] = s
    return out


def tf_filter(const double[::1] flow, double alpha, double beta):
    cdef Py_ssize_t n = flow.shape[0]
    cdef Py_ssize_t t
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for t in range(1, n):
            y[t] = alpha * y[t - 1] + beta * (flow[t] - flow[t - 1])
    return out


def tf_filter_sens(const double[::1] flow, double alpha, double beta):
    cdef Py_ssize_t n = flow.shape[0]
    cdef Py_ssize_t t
    out = np.zeros(n, dtype=np.float64)
    da = np.zeros(n, dtype=np.float64)
    db = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    cdef double[::1] sa = da
    cdef double[::1] sb = db
    cdef double d
    with nogil:
        for t in range(1, n):
            d = flow[t] - flow[t - 1]
            sb[t] = alpha * sb[t - 1] + d
            sa[t] = alpha * sa[t - 1] + y[t - 1]
            y[t] = alpha * y[t - 1] + beta * d
    return out, da, db
