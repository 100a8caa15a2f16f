# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Toeplitz block kernels.

Every block ``i`` is an ``M x n1`` Toeplitz matrix stored as a generator
``gens[i]`` of length ``M + n1 - 1`` with ``T[k, l] = gens[i, k - l + n1 - 1]``.
Signatures mirror :mod:`ptsense._pykernels` exactly.
"""
import numpy as np


cdef inline void _axpy(double alpha, const double* x, double* y, Py_ssize_t n) nogil:
    cdef Py_ssize_t k
    for k in range(n):
        y[k] += alpha * x[k]


def toeplitz_apply(const double[:, ::1] gens, const double[:, ::1] cols, Py_ssize_t M):
    """Return ``sum_i T_i @ cols[i]`` as a length-``M`` vector."""
    cdef Py_ssize_t n2 = gens.shape[0]
    cdef Py_ssize_t n1 = cols.shape[1]
    cdef Py_ssize_t i, l
    out = np.zeros(M, dtype=np.float64)
    cdef double[::1] y = out
    if M == 0:
        return out
    # column l of T_i is the generator slice starting at n1 - 1 - l
    with nogil:
        for i in range(n2):
            for l in range(n1):
                _axpy(cols[i, l], &gens[i, n1 - 1 - l], &y[0], M)
    return out


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) nogil:
    # four partial sums so the compiler can keep several FMAs in flight
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t k = 0
    while k + 4 <= n:
        s0 += a[k] * b[k]
        s1 += a[k + 1] * b[k + 1]
        s2 += a[k + 2] * b[k + 2]
        s3 += a[k + 3] * b[k + 3]
        k += 4
    while k < n:
        s0 += a[k] * b[k]
        k += 1
    return (s0 + s1) + (s2 + s3)


def toeplitz_adjoint(const double[:, ::1] gens, const double[::1] y, Py_ssize_t n1):
    """Return the ``(n2, n1)`` array whose row ``i`` is ``T_i.T @ y``."""
    cdef Py_ssize_t n2 = gens.shape[0]
    cdef Py_ssize_t M = y.shape[0]
    cdef Py_ssize_t i, l
    out = np.empty((n2, n1), dtype=np.float64)
    cdef double[:, ::1] res = out
    if M == 0:
        res[:, :] = 0.0
        return out
    with nogil:
        for i in range(n2):
            for l in range(n1):
                res[i, l] = _dot(&gens[i, n1 - 1 - l], &y[0], M)
    return out


def toeplitz_expand(const double[:, ::1] gens, Py_ssize_t M, Py_ssize_t n1):
    """Materialize every generator row into a dense ``(B, M, n1)`` stack."""
    cdef Py_ssize_t B = gens.shape[0]
    cdef Py_ssize_t b, k, l
    out = np.empty((B, M, n1), dtype=np.float64)
    cdef double[:, :, ::1] res = out
    for b in range(B):
        for k in range(M):
            for l in range(n1):
                res[b, k, l] = gens[b, k - l + n1 - 1]
    return out


def toeplitz_block_matvecs(const double[:, ::1] gens, const double[:, ::1] vecs, Py_ssize_t M):
    """Return ``out[k, c, i] = (T_i @ vecs[c])[k]`` with shape ``(M, r, n2)``."""
    cdef Py_ssize_t n2 = gens.shape[0]
    cdef Py_ssize_t r = vecs.shape[0]
    cdef Py_ssize_t n1 = vecs.shape[1]
    cdef Py_ssize_t i, c, k, l
    out = np.empty((M, r, n2), dtype=np.float64)
    cdef double[:, :, ::1] res = out
    buf = np.empty(M, dtype=np.float64)
    cdef double[::1] tmp = buf
    if M == 0:
        return out
    with nogil:
        for i in range(n2):
            for c in range(r):
                tmp[:] = 0.0
                for l in range(n1):
                    _axpy(vecs[c, l], &gens[i, n1 - 1 - l], &tmp[0], M)
                for k in range(M):
                    res[k, c, i] = tmp[k]
    return out
