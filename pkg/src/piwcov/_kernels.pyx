# cython: language_level=3
"""Compiled bisection kernel for the MAP eigenvalue equation.

Mirrors ``_kernels_py.solve_eigen_batch`` operation for operation so both
backends return bit-identical roots.
"""
import numpy as np

cimport cython


cdef inline double _poly(double lam, double c, double big_n, int q) noexcept nogil:
    cdef double lq = 1.0
    cdef int k
    for k in range(q):
        lq = lq * lam
    return (<double>q) * lq + c * lam - big_n


@cython.boundscheck(False)
@cython.wraparound(False)
cdef void _solve(const double[:] ell, double n, double big_n, int q, double tol,
                 int max_iter, double[:] roots, long[:] iters) noexcept nogil:
    cdef Py_ssize_t i
    cdef double lo, hi, mid, f, c, cap
    cdef int it
    for i in range(ell.shape[0]):
        c = n * ell[i]
        cap = c if c > big_n else big_n
        lo = 0.0
        hi = 1.0 + cap / q
        it = 0
        while hi - lo > tol * hi:
            if it >= max_iter:
                it = -1
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            f = _poly(mid, c, big_n, q)
            if f > 0.0:
                hi = mid
            elif f < 0.0:
                lo = mid
            else:
                lo = mid
                hi = mid
            it += 1
        roots[i] = 0.5 * (lo + hi)
        iters[i] = it


def solve_eigen_batch(ell, double n, double p, double m, int q, double tol, int max_iter):
    cdef double[::1] ell_v = np.ascontiguousarray(ell, dtype=np.float64).ravel()
    roots = np.empty(ell_v.shape[0], dtype=np.float64)
    iters = np.empty(ell_v.shape[0], dtype=np.int_)
    cdef double[:] roots_v = roots
    cdef long[:] iters_v = iters
    cdef double big_n = n + p + q * m + 1.0
    with nogil:
        _solve(ell_v, n, big_n, q, tol, max_iter, roots_v, iters_v)
    return roots, iters
