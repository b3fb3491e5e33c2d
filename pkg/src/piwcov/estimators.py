"""Covariance estimators: sample covariance, inverse Wishart MAP and power
inverse Wishart MAP, plus the floor/shrinkage calculus used to pick
hyperparameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import kernels
from ._parallel import replication_rng, run_replications, stream_key
from .exceptions import (
    DimensionError,
    InsufficientData,
    InvalidInput,
    NotDiagonalScalePrior,
    NumericalError,
)
from .matcore import SymPD, as_array, pd_power
from .prior import PiwPrior

__all__ = [
    "FloorShrink",
    "MapSolution",
    "LinearMap",
    "PiwMap",
    "sample_covariance",
    "iw_map",
    "piw_map",
    "solve_eigen_equation",
    "map_eigenvalues",
    "floor_shrink",
    "params_from_floor_shrink",
    "q2_curve_params",
    "regularization_curve",
    "match_linear_regularizer",
    "quantile_lmax_mle",
    "sample_gaussian",
]

DEFAULT_TOL = kernels.DEFAULT_TOL
RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class FloorShrink:
    """Lower limit ``floor`` of the MAP eigenvalues and asymptotic slope ``shrink``."""

    floor: float
    shrink: float


@dataclass(frozen=True)
class MapSolution:
    """MAP estimate with per-eigenvalue diagnostics.

    ``eigen_s`` are the descending eigenvalues of the whitened sample
    covariance, ``eigen_map`` the matching eigenvalues of the whitened
    estimate and ``residuals`` the absolute residuals of the eigenvalue
    equation at ``1 / eigen_map``.
    """

    sigma_hat: SymPD
    eigen_s: NDArray[np.float64]
    eigen_map: NDArray[np.float64]
    residuals: NDArray[np.float64]
    solver_iterations: NDArray[np.int_]


def sample_covariance(x: ArrayLike) -> tuple[NDArray[np.float64], SymPD]:
    """Sample mean and covariance with divisor ``n``.

    Parameters
    ----------
    x : array_like, shape (n, p)
        One observation per row.
    """
    data = np.asarray(x, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2:
        raise InvalidInput(f"data must be two-dimensional, got shape {data.shape}")
    n = data.shape[0]
    if n < 2:
        raise InsufficientData(f"need at least two observations, got {n}")
    if not np.all(np.isfinite(data)):
        raise InvalidInput("data has non-finite entries")
    mean = data.mean(axis=0)
    centered = data - mean
    return mean, SymPD(centered.T @ centered / n)


def iw_map(s: ArrayLike | SymPD, n: int, psi: ArrayLike | SymPD, m: float) -> SymPD:
    """Inverse Wishart MAP ``(n S + Psi) / (n + m + p + 1)``."""
    s_arr = as_array(s)
    psi_arr = as_array(psi)
    if s_arr.shape != psi_arr.shape:
        raise DimensionError(f"S has shape {s_arr.shape}, Psi has {psi_arr.shape}")
    if n < 1:
        raise InvalidInput(f"n must be positive, got {n}")
    p = s_arr.shape[0]
    return SymPD((n * s_arr + psi_arr) / (n + m + p + 1.0))


def solve_eigen_equation(
    ell: float, n: int, p: int, m: float, q: int, tol: float = DEFAULT_TOL
) -> float:
    """Unique positive root of ``q x**q + n*ell*x - (n + p + q*m + 1) = 0``.

    Solved by bisection bracketed by zero and the Cauchy bound.
    """
    if not ell >= 0:
        raise InvalidInput(f"ell must be non-negative, got {ell}")
    roots, _ = kernels.solve_eigen_batch(np.array([ell]), n, p, m, q, tol)
    return float(roots[0])


def _solve_whitened(
    ell: NDArray[np.float64], n: int, p: int, m: float, q: int, tol: float
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.int_]]:
    """Whitened MAP eigenvalues, the equation roots and solver iterations."""
    if q == 1:
        big_n = n + p + m + 1.0
        est = (n * ell + 1.0) / big_n
        return est, 1.0 / est, np.zeros(ell.shape, dtype=np.int_)
    if q == 2:
        est = kernels.q2_sigma_eigenvalues(ell, n, p, m)
        return est, 1.0 / est, np.zeros(ell.shape, dtype=np.int_)
    roots, iters = kernels.solve_eigen_batch(ell, n, p, m, q, tol)
    return 1.0 / roots, roots, iters


def map_eigenvalues(
    ell: ArrayLike, n: int, p: int, m: float, q: int, tol: float = DEFAULT_TOL
) -> NDArray[np.float64]:
    """Whitened MAP eigenvalues for whitened sample eigenvalues ``ell``.

    Uses the closed forms for ``q`` in {1, 2} and bisection otherwise.
    """
    ell = np.asarray(ell, dtype=np.float64)
    if np.any(ell < 0):
        raise InvalidInput("sample eigenvalues must be non-negative")
    shape = ell.shape
    est, _, _ = _solve_whitened(ell.ravel(), n, p, m, q, tol)
    return est.reshape(shape)


def _residuals(roots, ell, n, p, m, q):
    big_n = n + p + q * m + 1.0
    return np.abs(q * roots**q + n * ell * roots - big_n)


def piw_map(
    s: ArrayLike | SymPD,
    n: int,
    prior: PiwPrior,
    tol: float = DEFAULT_TOL,
) -> MapSolution:
    """Power inverse Wishart MAP estimate of the covariance.

    Whitens ``S`` with ``Psi``, regularizes each whitened eigenvalue through
    the MAP eigenvalue equation and maps back. Singular ``S`` (``n <= p``)
    is fine: zero eigenvalues are lifted to the floor.

    Raises
    ------
    NumericalError
        If a stationarity residual or eigenvalue bound is violated.
    """
    s_arr = as_array(s)
    p = prior.p
    if s_arr.shape != (p, p):
        raise DimensionError(f"S has shape {s_arr.shape}, prior dimension is {p}")
    if n < 1:
        raise InvalidInput(f"n must be positive, got {n}")
    q, m = prior.q, prior.m

    if prior.alpha is not None:
        s_sym = s if isinstance(s, SymPD) else SymPD(s_arr)
        ell, vecs = s_sym.eigenvalues / prior.alpha, s_sym.eigenvectors
        root_psi = None
    else:
        root_psi = pd_power(prior.psi, 0.5).entries
        inv_root = pd_power(prior.psi, -0.5).entries
        w = SymPD(inv_root @ s_arr @ inv_root)
        ell, vecs = w.eigenvalues, w.eigenvectors
    ell = np.clip(ell, 0.0, None)

    est, roots, iters = _solve_whitened(ell, n, p, m, q, tol)
    residuals = _residuals(roots, ell, n, p, m, q)
    big_n = prior.denominator(n)
    _check_contract(ell, est, residuals, n, big_n, q)

    core = (vecs * est) @ vecs.T
    if root_psi is None:
        sigma = prior.alpha * core
    else:
        sigma = root_psi @ core @ root_psi
    return MapSolution(SymPD(sigma), ell, est, residuals, iters)


def _check_contract(ell, est, residuals, n, big_n, q) -> None:
    worst = float(np.max(residuals, initial=0.0))
    if worst > RESIDUAL_TOL * big_n:
        raise NumericalError(f"eigenvalue equation residual {worst:.3g} exceeds {RESIDUAL_TOL * big_n:.3g}")
    lower = n / big_n * ell
    upper = 1.0 + np.maximum(float(q), n * ell) / big_n
    slack = 1e-12 * (1.0 + est)
    if np.any(est < lower - slack) or np.any(est > upper + slack):
        raise NumericalError("MAP eigenvalue outside its theoretical bounds")


def floor_shrink(prior: PiwPrior, n: int) -> FloorShrink:
    """Floor ``alpha (q/N)^(1/q)`` and shrinkage ``n/N`` with ``N = n + p + q m + 1``."""
    if prior.alpha is None:
        raise NotDiagonalScalePrior("floor and shrinkage are defined for Psi = alpha * I")
    big_n = prior.denominator(n)
    q = prior.q
    return FloorShrink(prior.alpha * (q / big_n) ** (1.0 / q), n / big_n)


def params_from_floor_shrink(
    floor: float, shrink_factor: float, q: int, n: int, p: int
) -> tuple[float, float]:
    """Prior ``(alpha, m)`` that attain a floor and a fraction of the maximal shrinkage.

    The maximal shrinkage ``n / (n + p + q p + 1)`` is attained at ``m = p``;
    the target is ``shrink_factor`` times that.
    """
    if not 0.0 < shrink_factor <= 1.0:
        raise InvalidInput(f"shrink_factor must lie in (0, 1], got {shrink_factor}")
    if not floor > 0:
        raise InvalidInput(f"floor must be positive, got {floor}")
    target = shrink_factor * n / (n + p + q * p + 1.0)
    m = (n / target - n - p - 1.0) / q
    if shrink_factor == 1.0:
        m = float(p)
    alpha = floor * (n / (target * q)) ** (1.0 / q)
    return alpha, m


def q2_curve_params(alpha: float, m: float, n: int, p: int) -> tuple[float, float]:
    """``(a, b)`` such that the ``q = 2`` eigenvalue map is ``a x + a sqrt(x**2 + b)``."""
    big_n = n + p + 2.0 * m + 1.0
    return n / (2.0 * big_n), 8.0 * big_n * alpha**2 / n**2


@dataclass(frozen=True)
class LinearMap:
    """Eigenvalue map ``x -> slope * x + intercept``; MLE is ``(1, 0)``."""

    slope: float
    intercept: float

    def __call__(self, x: ArrayLike, n: int | None = None, p: int | None = None) -> NDArray[np.float64]:
        return self.slope * np.asarray(x, dtype=np.float64) + self.intercept


@dataclass(frozen=True)
class PiwMap:
    """Eigenvalue map of the MAP with prior ``(alpha I, m, q)``."""

    q: int
    m: float
    alpha: float

    def __call__(self, x: ArrayLike, n: int, p: int, tol: float = DEFAULT_TOL) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        return self.alpha * map_eigenvalues(x / self.alpha, n, p, self.m, self.q, tol)


def regularization_curve(
    descriptor: LinearMap | PiwMap,
    n: int,
    grid: Sequence[float] | NDArray[np.float64],
    p: int | None = None,
) -> NDArray[np.float64]:
    """Evaluate an eigenvalue map ``lambda(S) -> lambda_hat`` on a grid."""
    grid = np.asarray(grid, dtype=np.float64)
    if np.any(grid < 0):
        raise InvalidInput("grid points must be non-negative")
    if isinstance(descriptor, PiwMap):
        if p is None:
            raise InvalidInput("p is required for a power inverse Wishart curve")
        return descriptor(grid, n, p)
    return descriptor(grid)


def _sqrt_integral(b: float, upper: float) -> float:
    """``int_0^upper sqrt(x**2 + b) dx``."""
    r = math.sqrt(upper * upper + b)
    if b == 0.0:
        return 0.5 * upper * upper
    return 0.5 * (upper * r + b * math.asinh(upper / math.sqrt(b)))


def match_linear_regularizer(q2_params: tuple[float, float], floor: float, L: float) -> float:
    """Slope ``a'`` of the linear map with intercept ``floor`` that matches the
    ``q = 2`` map ``a x + a sqrt(x**2 + b)`` on average over ``[0, L]``.
    """
    a, b = q2_params
    if not L > 0:
        raise InvalidInput(f"L must be positive, got {L}")
    if a < 0 or b < 0:
        raise InvalidInput("a and b must be non-negative")
    return a + 2.0 * a * _sqrt_integral(b, L) / (L * L) - 2.0 * floor / L


def sample_gaussian(rng: np.random.Generator, n: int, root: NDArray[np.float64]) -> NDArray[np.float64]:
    """``n`` draws from ``N(0, root @ root)`` with a symmetric square root."""
    return rng.standard_normal((n, root.shape[0])) @ root


def _scatter(x: NDArray[np.float64]) -> NDArray[np.float64]:
    centered = x - x.mean(axis=0)
    return centered.T @ centered / x.shape[0]


def quantile_lmax_mle(
    sigma: ArrayLike | SymPD,
    n: int,
    prob: float = 0.99,
    reps: int = 10_000,
    seed: int = 0,
    threads: int = 1,
) -> float:
    """Monte-Carlo ``prob``-quantile of the largest sample-covariance eigenvalue.

    Data are Gaussian with mean 0 and covariance ``sigma``; ``S`` uses the
    divisor ``n``. Replication ``r`` draws from its own seed stream, so the
    result does not depend on ``threads``.
    """
    if not 0.0 < prob < 1.0:
        raise InvalidInput(f"prob must lie in (0, 1), got {prob}")
    if reps < 100:
        raise InvalidInput(f"reps must be at least 100, got {reps}")
    if n < 2:
        raise InsufficientData(f"need n >= 2, got {n}")
    root = pd_power(sigma, 0.5).entries
    stream = (stream_key("lmax-quantile", n, root.shape[0]),)

    def one(rep: int) -> float:
        x = sample_gaussian(replication_rng(seed, stream, rep), n, root)
        return np.linalg.eigvalsh(_scatter(x))[-1]

    samples = run_replications(one, reps, threads)
    return float(np.quantile(samples, prob))
