"""Numpy fallback for the compiled bisection kernel.

All eigenvalues are bisected in lock step; each entry freezes as soon as
its own stopping rule fires.  The floating-point operations per entry are
the same, in the same order, as in ``_kernels.pyx``.
"""

import numpy as np


def _poly(lam, c, big_n, q):
    lq = np.ones_like(lam)
    for _ in range(q):
        lq = lq * lam
    return float(q) * lq + c * lam - big_n


def solve_eigen_batch(ell, n, p, m, q, tol, max_iter):
    ell = np.ascontiguousarray(ell, dtype=np.float64).ravel()
    big_n = n + p + q * m + 1.0
    c = n * ell
    lo = np.zeros_like(ell)
    hi = 1.0 + np.maximum(c, big_n) / q
    iters = np.zeros(ell.shape[0], dtype=np.int_)
    active = hi - lo > tol * hi
    while np.any(active):
        failed = active & (iters >= max_iter)
        if np.any(failed):
            iters[failed] = -1
            active &= ~failed
        mid = 0.5 * (lo + hi)
        stuck = active & ((mid <= lo) | (mid >= hi))
        active &= ~stuck
        if not np.any(active):
            break
        f = _poly(mid, c, big_n, q)
        up = active & (f > 0.0)
        down = active & (f < 0.0)
        hit = active & (f == 0.0)
        hi = np.where(up | hit, mid, hi)
        lo = np.where(down | hit, mid, lo)
        iters[active] += 1
        active &= hi - lo > tol * hi
    return 0.5 * (lo + hi), iters
