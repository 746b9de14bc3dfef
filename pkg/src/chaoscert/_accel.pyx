# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Hermite-monomial evaluator."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


def eval_monomials(const double[:, ::1] xi, const cnp.int64_t[:, ::1] idx,
                   const cnp.int64_t[:, ::1] mult, int max_deg):
    """``out[s, t] = prod_k He_{mult[t,k]}(xi[s, idx[t,k]])``.

    A zero multiplicity contributes the factor ``He_0 = 1``.
    """
    cdef Py_ssize_t n = xi.shape[0], d = xi.shape[1]
    cdef Py_ssize_t T = idx.shape[0], P = idx.shape[1]
    cdef Py_ssize_t D = max_deg + 1
    out = np.empty((n, T), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double *H
    cdef Py_ssize_t s, j, k, t
    cdef double x, v
    cdef cnp.int64_t mk
    if n == 0 or T == 0:
        return out
    H = <double *> malloc(d * D * sizeof(double))
    if H == NULL:
        raise MemoryError()
    try:
        with nogil:
            for s in range(n):
                for j in range(d):
                    x = xi[s, j]
                    H[j * D] = 1.0
                    if D > 1:
                        H[j * D + 1] = x
                    for k in range(2, D):
                        H[j * D + k] = x * H[j * D + k - 1] - (k - 1) * H[j * D + k - 2]
                for t in range(T):
                    v = 1.0
                    for k in range(P):
                        mk = mult[t, k]
                        if mk != 0:
                            v = v * H[idx[t, k] * D + mk]
                    o[s, t] = v
    finally:
        free(H)
    return out
