"""Landmark shape workflow: block AR(1) prior, EBLUP prediction of missing
coordinates and leave-one-out selection of the prior hyperparameters.

Shapes are planar curves sampled at ``point_count`` points whose two
endpoints are fixed at ``(0, 0)`` and ``(1, 0)``.  Only interior points
carry information, so a dataset column vector is
``(x_2 .. x_{k-1}, y_2 .. y_{k-1})``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg

from .estimators import MapSolution, piw_map, sample_covariance
from .exceptions import DimensionError, InsufficientData, InvalidInput, InvalidMatrix, SingularBlock
from .matcore import SymPD, as_array
from .prior import PiwPrior

__all__ = [
    "ShapeDataset",
    "Ar1BlockPrior",
    "build_ar1_block_psi",
    "fit_map",
    "eblup_predict",
    "loo_cv_score",
    "CvResult",
    "cv_grid_search",
    "FitSummary",
    "correlation_matrix",
    "summarize_fit",
    "synthetic_block_ar1",
    "missing_coordinates",
]

COND_LIMIT = 1e12
ENDPOINT_TOL = 1e-6


@dataclass(frozen=True)
class ShapeDataset:
    """Interior landmark coordinates, one shape per row.

    ``data`` has ``p = 2 * (point_count - 2)`` columns: the interior
    x-coordinates followed by the interior y-coordinates.
    """

    data: NDArray[np.float64]
    point_count: int
    labels: tuple[str, ...]
    excluded_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidInput(f"data must be two-dimensional, got shape {data.shape}")
        if self.point_count < 3:
            raise InvalidInput(f"need at least three points per shape, got {self.point_count}")
        if data.shape[1] != 2 * (self.point_count - 2):
            raise DimensionError(
                f"{data.shape[1]} columns do not match {self.point_count} points with fixed endpoints"
            )
        if len(self.labels) != data.shape[0]:
            raise InvalidInput(f"{len(self.labels)} labels for {data.shape[0]} shapes")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("shape data has non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "excluded_ids", tuple(str(s) for s in self.excluded_ids))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    @property
    def half_dim(self) -> int:
        return self.p // 2

    @classmethod
    def from_full_coordinates(
        cls,
        coords: ArrayLike,
        labels: Sequence[str] | None = None,
        exclude: Sequence[str] = (),
        check_endpoints: bool = True,
    ) -> "ShapeDataset":
        """Build from rows ``(x_1 .. x_k, y_1 .. y_k)`` including the endpoints.

        Rows whose label is in ``exclude`` are dropped.
        """
        full = np.asarray(coords, dtype=np.float64)
        if full.ndim != 2 or full.shape[1] % 2:
            raise InvalidInput(f"expected an even number of columns, got shape {full.shape}")
        k = full.shape[1] // 2
        labels = [str(i) for i in range(full.shape[0])] if labels is None else [str(s) for s in labels]
        if len(labels) != full.shape[0]:
            raise InvalidInput(f"{len(labels)} labels for {full.shape[0]} shapes")
        keep = [i for i, lab in enumerate(labels) if lab not in set(exclude)]
        full = full[keep]
        labels = [labels[i] for i in keep]
        if check_endpoints and full.size:
            ends = full[:, [0, k - 1, k, 2 * k - 1]]
            if not np.allclose(ends, [0.0, 1.0, 0.0, 0.0], atol=ENDPOINT_TOL):
                raise InvalidInput("endpoints are not fixed at (0, 0) and (1, 0)")
        interior = np.hstack([full[:, 1 : k - 1], full[:, k + 1 : 2 * k - 1]])
        return cls(interior, k, tuple(labels), tuple(exclude))

    @classmethod
    def from_csv(
        cls, path: str | Path, exclude: Sequence[str] = (), check_endpoints: bool = True
    ) -> "ShapeDataset":
        """Read one shape per row.

        A non-numeric first column is taken as the shape label and a
        non-numeric first row as a header.
        """
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        if not rows:
            raise InvalidMatrix(f"{path}: empty CSV")

        def numeric(cells: Sequence[str]) -> bool:
            try:
                [float(c) for c in cells]
            except ValueError:
                return False
            return True

        has_label = not numeric(rows[-1][:1])
        if not numeric(rows[0][1:] if has_label else rows[0]):
            rows = rows[1:]
        labels = [r[0].strip() for r in rows] if has_label else [str(i) for i in range(len(rows))]
        body = [r[1:] if has_label else r for r in rows]
        if len({len(r) for r in body}) != 1:
            raise InvalidMatrix(f"{path}: ragged rows")
        try:
            coords = np.array([[float(c) for c in r] for r in body], dtype=np.float64)
        except ValueError as exc:
            raise InvalidMatrix(f"{path}: non-numeric entry ({exc})") from None
        return cls.from_full_coordinates(coords, labels, exclude, check_endpoints)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InvalidInput(f"unknown shape label {label!r}") from None

    def without(self, rows: Sequence[int]) -> "ShapeDataset":
        keep = [i for i in range(self.n) if i not in set(rows)]
        return ShapeDataset(self.data[keep], self.point_count, tuple(self.labels[i] for i in keep), self.excluded_ids)


def _ar1(rho: float, size: int) -> NDArray[np.float64]:
    return linalg.toeplitz(rho ** np.arange(size, dtype=np.float64))


def build_ar1_block_psi(rho: float, half_dim: int, alpha: float) -> SymPD:
    """``alpha * blockdiag(AR1(rho), AR1(rho))`` with ``AR1(rho)[i, j] = rho**|i - j|``."""
    if not abs(rho) < 1.0:
        raise InvalidInput(f"rho must lie in (-1, 1), got {rho}")
    if half_dim < 1:
        raise InvalidInput(f"half_dim must be positive, got {half_dim}")
    if not alpha > 0:
        raise InvalidInput(f"alpha must be positive, got {alpha}")
    block = _ar1(rho, half_dim)
    return SymPD(alpha * linalg.block_diag(block, block))


@dataclass(frozen=True)
class Ar1BlockPrior:
    """Scale ``alpha * blockdiag(AR1(rho), AR1(rho))`` for x and y coordinates."""

    rho: float
    alpha: float
    half_dim: int

    def psi(self) -> SymPD:
        return build_ar1_block_psi(self.rho, self.half_dim, self.alpha)

    def to_piw(self, q: int = 2, m: float | None = None) -> PiwPrior:
        """PIW prior with this scale; ``m`` defaults to ``p``."""
        p = 2 * self.half_dim
        psi = self.psi()
        alpha = self.alpha if self.rho == 0.0 else None
        return PiwPrior(psi, float(p) if m is None else m, q, alpha=alpha)


def fit_map(data: ShapeDataset | ArrayLike, prior: PiwPrior) -> tuple[NDArray[np.float64], MapSolution]:
    """Training mean and PIW MAP covariance of the rows of ``data``."""
    x = data.data if isinstance(data, ShapeDataset) else np.asarray(data, dtype=np.float64)
    mean, s = sample_covariance(x)
    return mean, piw_map(s, x.shape[0], prior)


def eblup_predict(
    mean: ArrayLike,
    sigma_hat: ArrayLike | SymPD,
    observed_idx: Sequence[int] | NDArray[np.int_],
    x_obs: ArrayLike,
) -> NDArray[np.float64]:
    """Conditional mean of the unobserved coordinates given the observed ones.

    Returns ``mu_M + Sigma_MO Sigma_OO^{-1} (x_obs - mu_O)`` for the
    complement ``M`` of ``observed_idx`` in ascending index order.

    Raises
    ------
    SingularBlock
        If the condition number of ``Sigma_OO`` exceeds 1e12.
    """
    mu = np.asarray(mean, dtype=np.float64).ravel()
    sig = as_array(sigma_hat)
    p = mu.size
    if sig.shape != (p, p):
        raise DimensionError(f"mean has length {p}, covariance shape {sig.shape}")
    obs = np.asarray(observed_idx, dtype=np.int64).ravel()
    if obs.size and (obs.min() < 0 or obs.max() >= p):
        raise InvalidInput("observed index out of range")
    if np.unique(obs).size != obs.size:
        raise InvalidInput("observed indices must be distinct")
    x = np.asarray(x_obs, dtype=np.float64).ravel()
    if x.size != obs.size:
        raise DimensionError(f"{x.size} observed values for {obs.size} indices")
    mis = np.setdiff1d(np.arange(p), obs)
    if obs.size == 0:
        return mu[mis].copy()
    block = sig[np.ix_(obs, obs)]
    cond = np.linalg.cond(block)
    if not cond <= COND_LIMIT:
        raise SingularBlock(f"observed covariance block is singular (condition number {cond:.3g})")
    weights = linalg.solve(block, x - mu[obs], assume_a="sym")
    return mu[mis] + sig[np.ix_(mis, obs)] @ weights


def missing_coordinates(point_range: range, half_dim: int) -> NDArray[np.int_]:
    """Column indices of both coordinates of the interior points in ``point_range``."""
    pts = np.asarray(list(point_range), dtype=np.int64)
    if pts.size and (pts.min() < 0 or pts.max() >= half_dim):
        raise InvalidInput(f"point range {point_range} outside 0..{half_dim - 1}")
    return np.concatenate([pts, pts + half_dim])


def _gaussian_logpdf(x: NDArray[np.float64], mean: NDArray[np.float64], cov: NDArray[np.float64]) -> float:
    chol = linalg.cholesky(cov, lower=True)
    z = linalg.solve_triangular(chol, x - mean, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * (x.size * np.log(2.0 * np.pi) + logdet + z @ z))


def loo_cv_score(data: ShapeDataset, rho: float, alpha: float, q: int = 2, m: float | None = None) -> float:
    """Sum over shapes of the Gaussian log-density of each shape under the
    mean and MAP covariance fitted to the remaining shapes.  Higher is better.
    """
    if data.n < 3:
        raise InsufficientData(f"leave-one-out needs at least 3 shapes, got {data.n}")
    prior = Ar1BlockPrior(rho, alpha, data.half_dim).to_piw(q, m)
    total = 0.0
    for i in range(data.n):
        train = np.delete(data.data, i, axis=0)
        mean, sol = fit_map(train, prior)
        total += _gaussian_logpdf(data.data[i], mean, sol.sigma_hat.entries)
    return total


@dataclass(frozen=True)
class CvResult:
    """Selected ``(rho, alpha)`` with the full score table (rows: rho, columns: alpha)."""

    rho: float
    alpha: float
    rho_grid: tuple[float, ...]
    alpha_grid: tuple[float, ...]
    scores: NDArray[np.float64] = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "alpha": self.alpha,
            "rho_grid": list(self.rho_grid),
            "alpha_grid": list(self.alpha_grid),
            "scores": self.scores.tolist(),
        }


def cv_grid_search(
    data: ShapeDataset,
    rho_grid: Sequence[float],
    alpha_grid: Sequence[float],
    q: int = 2,
    m: float | None = None,
    threads: int = 1,
) -> CvResult:
    """Exhaustive leave-one-out search over ``rho_grid x alpha_grid``.

    Grids are sorted first, so the result does not depend on their order.
    Exact ties go to the smaller ``alpha``, then the smaller ``rho``.
    """
    rhos = tuple(sorted({float(r) for r in rho_grid}))
    alphas = tuple(sorted({float(a) for a in alpha_grid}))
    if not rhos or not alphas:
        raise InvalidInput("grids must be nonempty")
    cells = [(i, j) for i in range(len(rhos)) for j in range(len(alphas))]
    scores = np.empty((len(rhos), len(alphas)))

    def work(cell: tuple[int, int]) -> None:
        i, j = cell
        scores[i, j] = loo_cv_score(data, rhos[i], alphas[j], q, m)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, cells))
    else:
        for c in cells:
            work(c)
    best = np.max(scores)
    # alpha-major scan so the first hit is the smallest alpha, then smallest rho
    for j in range(len(alphas)):
        for i in range(len(rhos)):
            if scores[i, j] == best:
                return CvResult(rhos[i], alphas[j], rhos, alphas, scores)
    raise InvalidInput("no finite cross-validation score")


@dataclass(frozen=True)
class FitSummary:
    """Quantities for plotting a fitted shape covariance.

    ``variance_lower`` and ``variance_upper`` are the diagonals of
    ``c Psi`` and ``c Psi + (n/N) S`` with ``c = (q/N)**(1/q)``, which
    bracket the MAP variances.
    """

    variances: NDArray[np.float64]
    variance_lower: NDArray[np.float64]
    variance_upper: NDArray[np.float64]
    mle_variances: NDArray[np.float64]
    correlation: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]
    trace_map: float
    trace_mle: float

    def to_dict(self) -> dict:
        return {
            "trace_map": self.trace_map,
            "trace_mle": self.trace_mle,
            "variances": self.variances.tolist(),
            "variance_lower": self.variance_lower.tolist(),
            "variance_upper": self.variance_upper.tolist(),
            "mle_variances": self.mle_variances.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
        }


def correlation_matrix(cov: ArrayLike | SymPD) -> NDArray[np.float64]:
    c = as_array(cov)
    d = np.sqrt(np.diag(c))
    if np.any(d <= 0):
        raise InvalidInput("correlation needs positive variances")
    out = c / np.outer(d, d)
    np.fill_diagonal(out, 1.0)
    return out


def summarize_fit(data: ShapeDataset, prior: PiwPrior, k: int = 4) -> FitSummary:
    """MAP fit of ``data`` under ``prior`` reduced to plotting quantities."""
    mean, s = sample_covariance(data.data)
    sol = piw_map(s, data.n, prior)
    sig = sol.sigma_hat
    big_n = prior.denominator(data.n)
    coef = (prior.q / big_n) ** (1.0 / prior.q)
    lower = coef * np.diag(prior.psi.entries)
    upper = lower + data.n / big_n * np.diag(s.entries)
    k = min(k, data.p)
    return FitSummary(
        variances=np.diag(sig.entries).copy(),
        variance_lower=lower,
        variance_upper=upper,
        mle_variances=np.diag(s.entries).copy(),
        correlation=correlation_matrix(sig),
        eigenvalues=sig.eigenvalues.copy(),
        eigenvectors=sig.eigenvectors[:, :k].copy(),
        trace_map=sig.trace(),
        trace_mle=s.trace(),
    )


def synthetic_block_ar1(
    n: int, half_dim: int, rho: float, scale: float, seed: int = 0
) -> ShapeDataset:
    """Shapes whose interior coordinates are ``N(mean, scale * blockdiag(AR1, AR1))``.

    The mean is a half-sine bump in y so the curves resemble notches.
    """
    rng = np.random.default_rng(seed)
    cov = build_ar1_block_psi(rho, half_dim, scale).entries
    t = np.linspace(0.0, 1.0, half_dim + 2)[1:-1]
    mu = np.concatenate([t, 0.2 * np.sin(np.pi * t)])
    draws = rng.multivariate_normal(mu, cov, size=n, method="cholesky")
    return ShapeDataset(draws, half_dim + 2, tuple(f"s{i:03d}" for i in range(n)))
