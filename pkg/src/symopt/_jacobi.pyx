# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled one-sided Jacobi sweep kernel (same contract as _jacobi_py)."""

import numpy as np
from libc.math cimport sqrt, fabs, hypot, copysign


def jacobi_sweeps(double[:, ::1] At, double[:, ::1] Vt, double tol, int max_sweeps):
    cdef Py_ssize_t n = At.shape[0]
    cdef Py_ssize_t m = At.shape[1]
    cdef Py_ssize_t nv = Vt.shape[1]
    cdef Py_ssize_t p, q, i
    cdef double alpha, beta, gamma, zeta, t, c, s, x, y
    cdef int sweep
    cdef bint rotated
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    x = At[p, i]
                    y = At[q, i]
                    alpha += x * x
                    beta += y * y
                    gamma += x * y
                if alpha == 0.0 or beta == 0.0:
                    continue
                if fabs(gamma) <= tol * sqrt(alpha) * sqrt(beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = copysign(1.0, zeta) / (fabs(zeta) + hypot(1.0, zeta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    x = At[p, i]
                    y = At[q, i]
                    At[p, i] = c * x - s * y
                    At[q, i] = s * x + c * y
                for i in range(nv):
                    x = Vt[p, i]
                    y = Vt[q, i]
                    Vt[p, i] = c * x - s * y
                    Vt[q, i] = s * x + c * y
        if not rotated:
            return sweep
    return max_sweeps


def column_norms(double[:, ::1] At):
    cdef Py_ssize_t n = At.shape[0]
    cdef Py_ssize_t m = At.shape[1]
    cdef Py_ssize_t p, i
    cdef double scale, acc, x
    out = np.zeros(n)
    cdef double[::1] o = out
    for p in range(n):
        scale = 0.0
        for i in range(m):
            if fabs(At[p, i]) > scale:
                scale = fabs(At[p, i])
        if scale == 0.0:
            continue
        acc = 0.0
        for i in range(m):
            x = At[p, i] / scale
            acc += x * x
        o[p] = scale * sqrt(acc)
    return out
