"""Backend selection for the eigenvalue-equation kernels.

The compiled extension ``piwcov._kernels`` is used when it was built;
otherwise the numpy implementation in ``piwcov._kernels_py`` takes over.
Both produce identical results.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _kernels_py
from .exceptions import SolverError

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

_BACKENDS = {"python": _kernels_py}
if _compiled is not None:
    _BACKENDS["cython"] = _compiled

BACKEND = "cython" if _compiled is not None else "python"

DEFAULT_TOL = 1e-13
MAX_ITER = 2000


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def set_backend(name: str) -> None:
    """Select the kernel backend for subsequent calls (``cython``/``python``)."""
    global BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    BACKEND = name


def solve_eigen_batch(
    ell: ArrayLike,
    n: float,
    p: float,
    m: float,
    q: int,
    tol: float = DEFAULT_TOL,
    *,
    backend: str | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.int_]]:
    """Positive roots of ``q x**q + n*ell*x - (n + p + q*m + 1) = 0``.

    Bisection on ``[0, U]`` with the Cauchy bound
    ``U = 1 + max(n*ell, n + p + q*m + 1) / q``, stopped when the bracket
    width drops below ``tol`` times its upper end.

    Returns
    -------
    roots, iterations : ndarray
        One root and one iteration count per entry of ``ell``.
    """
    mod = _BACKENDS[backend or BACKEND]
    roots, iters = mod.solve_eigen_batch(
        np.asarray(ell, dtype=np.float64), float(n), float(p), float(m), int(q), float(tol), MAX_ITER
    )
    if np.any(iters < 0):
        raise SolverError(f"bisection did not converge within {MAX_ITER} iterations")
    return roots, iters


def q2_sigma_eigenvalues(ell: ArrayLike, n: float, p: float, m: float) -> NDArray[np.float64]:
    """Closed-form reciprocal roots for ``q = 2``.

    ``n / (2N) * (ell + sqrt(ell**2 + 8N / n**2))`` with ``N = n + p + 2m + 1``;
    this form avoids the cancellation of the plain quadratic formula.
    """
    ell = np.asarray(ell, dtype=np.float64)
    big_n = n + p + 2.0 * m + 1.0
    return n / (2.0 * big_n) * (ell + np.sqrt(ell * ell + 8.0 * big_n / (n * n)))
