"""The power inverse Wishart distribution.

Densities are evaluated up to the additive constant ``-log c(m, q)``: the
normalizing integral has no known closed form for ``q > 1``, and MAP
estimation does not need it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DimensionError, InvalidInput, NotPositiveDefinite
from .matcore import SymPD, whiten

__all__ = [
    "PiwPrior",
    "log_unnormalized_density",
    "prior_mode",
    "log_density_ratio_curve",
]


@dataclass(frozen=True)
class PiwPrior:
    """Hyperparameters ``(Psi, m, q)`` of a power inverse Wishart prior.

    Parameters
    ----------
    psi : SymPD
        Positive definite scale matrix.
    m : float
        Degrees of freedom, ``m >= p``. Real values are allowed.
    q : int
        Positive integer power; ``q = 1`` is the inverse Wishart.
    alpha : float, optional
        Set iff ``psi == alpha * I``; enables the eigenvector-preserving
        fast paths.
    """

    psi: SymPD
    m: float
    q: int
    alpha: float | None = None

    def __post_init__(self) -> None:
        psi = self.psi if isinstance(self.psi, SymPD) else SymPD(self.psi)
        object.__setattr__(self, "psi", psi)
        if isinstance(self.q, bool) or not float(self.q).is_integer() or self.q < 1:
            raise InvalidInput(f"q must be a positive integer, got {self.q!r}")
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "m", float(self.m))
        if not np.isfinite(self.m) or self.m < psi.dim:
            raise InvalidInput(f"m must satisfy m >= p = {psi.dim}, got {self.m}")
        if not psi.is_pd:
            raise NotPositiveDefinite("prior scale Psi must be positive definite")
        if self.alpha is not None:
            alpha = float(self.alpha)
            if not alpha > 0:
                raise InvalidInput(f"alpha must be positive, got {alpha}")
            if not np.allclose(psi.entries, alpha * np.eye(psi.dim), rtol=1e-12, atol=0.0):
                raise InvalidInput("alpha given but Psi is not alpha * I")
            object.__setattr__(self, "alpha", alpha)

    @classmethod
    def scalar(cls, alpha: float, p: int, m: float, q: int) -> "PiwPrior":
        """Prior with ``Psi = alpha * I_p``."""
        if not alpha > 0:
            raise InvalidInput(f"alpha must be positive, got {alpha}")
        return cls(SymPD(alpha * np.eye(p)), m, q, alpha=alpha)

    @property
    def p(self) -> int:
        return self.psi.dim

    def denominator(self, n: int) -> float:
        """``n + p + q*m + 1``, the weight that appears in every MAP formula."""
        return n + self.p + self.q * self.m + 1.0


def log_unnormalized_density(prior: PiwPrior, b: ArrayLike | SymPD) -> float:
    """Log-density of ``B`` without the normalizing constant.

    Returns ``-tr((Psi^{-1/2} B Psi^{-1/2})^{-q}) / 2 + (q m / 2) log|Psi|
    - (q m / 2 + (p + 1) / 2) log|B|``.
    """
    b = b if isinstance(b, SymPD) else SymPD(b)
    p, q, m = prior.p, prior.q, prior.m
    if b.dim != p:
        raise DimensionError(f"B has dimension {b.dim}, prior has {p}")
    if not b.is_pd:
        raise NotPositiveDefinite("density is only defined on positive definite matrices")
    w = whiten(b, prior.psi)
    if not w.is_pd:
        raise NotPositiveDefinite("B is singular within working precision")
    trace_term = float(np.sum(w.eigenvalues ** (-q)))
    return -0.5 * trace_term + 0.5 * q * m * prior.psi.logdet() - (0.5 * q * m + 0.5 * p + 0.5) * b.logdet()


def prior_mode(prior: PiwPrior) -> SymPD:
    """Mode ``(q / (q m + p + 1))**(1/q) * Psi``."""
    q = prior.q
    coef = (q / (q * prior.m + prior.p + 1.0)) ** (1.0 / q)
    return SymPD(coef * prior.psi.entries)


def log_density_ratio_curve(
    q: int,
    m_q: float,
    m_1: float,
    eigen_grid: Sequence[float] | Sequence[Sequence[float]] | NDArray[np.float64],
) -> NDArray[np.float64]:
    """Log of the power-q to inverse Wishart density ratio along a grid.

    Each grid point is either a scalar eigenvalue (``p = 1``) or a tuple of
    eigenvalues of ``Psi^{-1/2} B Psi^{-1/2}``. The curve is normalized to
    0 at the all-ones point.
    """
    grid = np.asarray(eigen_grid, dtype=np.float64)
    if grid.ndim == 0:
        grid = grid.reshape(1)
    if grid.ndim == 1:
        grid = grid[:, None]
    if not np.all(grid > 0):
        raise InvalidInput("eigenvalue grid must be strictly positive")
    with np.errstate(over="ignore"):
        per_eig = -0.5 * (grid ** (-float(q)) - 1.0 / grid) - 0.5 * (q * m_q - m_1) * np.log(grid)
    # every per-eigenvalue term vanishes at 1, so no explicit shift is needed
    return np.sum(per_eig, axis=1)
