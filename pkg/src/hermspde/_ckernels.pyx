# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Hermite-function kernels.

All routines work on one axis and evaluate the orthonormal Hermite functions
through the normalized three-term recurrence (Gaussian factor included), so
no factorials or raw Hermite polynomials appear.
"""
import numpy as np

from libc.math cimport exp, sqrt
from libc.stdlib cimport malloc, free

cdef double PI_M14 = 0.7511255444649425
cdef double SQRT2 = 1.4142135623730951


cdef inline void _fill(double x, Py_ssize_t K, double* h,
                       const double* c1, const double* c2) noexcept nogil:
    cdef Py_ssize_t m
    h[0] = PI_M14 * exp(-0.5 * x * x)
    if K > 1:
        h[1] = SQRT2 * x * h[0]
    for m in range(1, K - 1):
        h[m + 1] = c1[m] * x * h[m] - c2[m] * h[m - 1]


cdef double* _recurrence_coeffs(Py_ssize_t K, int second) noexcept nogil:
    cdef double* c = <double*> malloc((K + 1) * sizeof(double))
    cdef Py_ssize_t m
    for m in range(K + 1):
        if second:
            c[m] = sqrt(m / (m + 1.0))
        else:
            c[m] = sqrt(2.0 / (m + 1.0))
    return c


def hermite_table(Py_ssize_t K, double[::1] x):
    """Values h_m(x_i) for m < K, shape (len(x), K)."""
    cdef Py_ssize_t P = x.shape[0], i
    out = np.zeros((P, K), dtype=np.float64)
    if K == 0:
        return out
    cdef double[:, ::1] o = out
    cdef double* c1
    cdef double* c2
    with nogil:
        c1 = _recurrence_coeffs(K, 0)
        c2 = _recurrence_coeffs(K, 1)
        for i in range(P):
            _fill(x[i], K, &o[i, 0], c1, c2)
        free(c1)
        free(c2)
    return out


def translate_rows(const double[:, :] A, const double[::1] shifts,
                   const double[::1] nodes, const double[::1] sw, Py_ssize_t kout):
    """Coefficients of u_m(. - z_m) on h_0..h_{kout-1} for each row u_m of A.

    Uses the midpoint substitution y = v + z/2, which turns the integrand
    into a polynomial times exp(-v^2); exact once the rule has enough nodes.
    """
    cdef Py_ssize_t M = A.shape[0], Ka = A.shape[1], Q = nodes.shape[0]
    cdef Py_ssize_t m, q, j, k, K = Ka if Ka > kout else kout
    out = np.zeros((M, kout), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double s, half
    cdef double* h
    cdef double* c1
    cdef double* c2
    with nogil:
        h = <double*> malloc(K * sizeof(double))
        c1 = _recurrence_coeffs(K, 0)
        c2 = _recurrence_coeffs(K, 1)
        for m in range(M):
            half = 0.5 * shifts[m]
            for q in range(Q):
                _fill(nodes[q] - half, Ka, h, c1, c2)
                s = 0.0
                for j in range(Ka):
                    s = s + A[m, j] * h[j]
                s = s * sw[q]
                _fill(nodes[q] + half, kout, h, c1, c2)
                for k in range(kout):
                    o[m, k] = o[m, k] + s * h[k]
        free(h)
        free(c1)
        free(c2)
    return out


def shifted_overlap(const double[:, :] A, const double[::1] B,
                    const double[::1] shifts, const double[::1] nodes,
                    const double[::1] sw):
    """Integral of a_m(u - z_m) b(u) du for each row a_m of A."""
    cdef Py_ssize_t M = A.shape[0], Ka = A.shape[1], Kb = B.shape[0]
    cdef Py_ssize_t Q = nodes.shape[0], m, q, j
    cdef Py_ssize_t K = Ka if Ka > Kb else Kb
    out = np.zeros(M, dtype=np.float64)
    cdef double[::1] o = out
    cdef double s1, s2, acc, half
    cdef double* h
    cdef double* c1
    cdef double* c2
    with nogil:
        h = <double*> malloc(K * sizeof(double))
        c1 = _recurrence_coeffs(K, 0)
        c2 = _recurrence_coeffs(K, 1)
        for m in range(M):
            half = 0.5 * shifts[m]
            acc = 0.0
            for q in range(Q):
                _fill(nodes[q] - half, Ka, h, c1, c2)
                s1 = 0.0
                for j in range(Ka):
                    s1 = s1 + A[m, j] * h[j]
                _fill(nodes[q] + half, Kb, h, c1, c2)
                s2 = 0.0
                for j in range(Kb):
                    s2 = s2 + B[j] * h[j]
                acc = acc + sw[q] * s1 * s2
            o[m] = acc
        free(h)
        free(c1)
        free(c2)
    return out
