"""Large-dimension behaviour of the largest MAP eigenvalue.

The largest sample eigenvalue under ``Sigma = I``, centred by ``mu_np`` and
scaled by ``sigma_np``, has a Tracy-Widom limit.  The MAP counterpart is
checked by distribution matching against that statistic rather than by
evaluating the Tracy-Widom CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, stats

from ._parallel import replication_rng, run_replications, stream_key
from .estimators import PiwMap
from .exceptions import InvalidInput

__all__ = [
    "AsymptoticFrame",
    "centering_constants",
    "centered_stat_mle",
    "centered_stat_map",
    "q1_affine_decomposition",
    "predicted_limit",
    "simulate_lmax",
    "tw_matching_experiment",
    "mean_lmax_map",
]

Scale = Literal["unshrunk", "shrunk"]


def centering_constants(n: int, p: int) -> tuple[float, float]:
    """``(mu_np, sigma_np)`` for the largest eigenvalue of a white Wishart matrix."""
    if n < 1 or p < 1:
        raise InvalidInput(f"n and p must be positive, got n={n}, p={p}")
    rn, rp = math.sqrt(n), math.sqrt(p)
    mu = (1.0 + math.sqrt(p / n)) ** 2
    sigma = (rn + rp) / n * (1.0 / rn + 1.0 / rp) ** (1.0 / 3.0)
    return mu, sigma


@dataclass(frozen=True)
class AsymptoticFrame:
    """Problem size, prior shape and the derived centering constants."""

    n: int
    p: int
    q: int
    m: float
    mu_np: float
    sigma_np: float
    gamma_ratio: float
    kappa: float

    @classmethod
    def build(cls, n: int, p: int, q: int, m: float) -> "AsymptoticFrame":
        if m < p:
            raise InvalidInput(f"m must satisfy m >= p, got m={m}, p={p}")
        if q < 1:
            raise InvalidInput(f"q must be positive, got {q}")
        mu, sigma = centering_constants(n, p)
        return cls(n, p, int(q), float(m), mu, sigma, n / p, m / p)

    @property
    def map_center(self) -> float:
        """``n / (n + p + q m + 1) * mu_np``."""
        return self.n / (self.n + self.p + self.q * self.m + 1.0) * self.mu_np

    def map_scale(self, scale: Scale = "unshrunk") -> float:
        """Denominator of the MAP statistic.

        ``"unshrunk"`` gives ``n / (n + p) * sigma_np``; ``"shrunk"`` gives
        ``n / (n + p + q m) * sigma_np``.
        """
        if scale == "unshrunk":
            return self.n / (self.n + self.p) * self.sigma_np
        if scale == "shrunk":
            return self.n / (self.n + self.p + self.q * self.m) * self.sigma_np
        raise InvalidInput(f"unknown scale {scale!r}")


def centered_stat_mle(lmax: ArrayLike, n: int, p: int) -> NDArray[np.float64] | float:
    """``(lmax - mu_np) / sigma_np``."""
    mu, sigma = centering_constants(n, p)
    out = (np.asarray(lmax, dtype=np.float64) - mu) / sigma
    return float(out) if out.ndim == 0 else out


def centered_stat_map(
    lmax_map: ArrayLike, frame: AsymptoticFrame, scale: Scale = "unshrunk"
) -> NDArray[np.float64] | float:
    """``(lmax_map - map_center) / map_scale``; see :meth:`AsymptoticFrame.map_scale`."""
    out = (np.asarray(lmax_map, dtype=np.float64) - frame.map_center) / frame.map_scale(scale)
    return float(out) if out.ndim == 0 else out


def q1_affine_decomposition(frame: AsymptoticFrame, alpha: float, scale: Scale = "unshrunk") -> tuple[float, float]:
    """``(slope, offset)`` with ``centered_stat_map = slope * centered_stat_mle + offset``
    for the ``q = 1`` MAP with ``Psi = alpha I``.

    The ``q = 1`` largest eigenvalue is ``(n lmax + alpha) / (n + p + m + 1)``.
    """
    if frame.q != 1:
        raise InvalidInput("the affine decomposition is exact only for q = 1")
    big_n = frame.n + frame.p + frame.m + 1.0
    denom = frame.map_scale(scale)
    slope = frame.n * frame.sigma_np / (big_n * denom)
    return slope, alpha / (big_n * denom)


def predicted_limit(gamma_ratio: float, kappa: float, q: int) -> float:
    """Probability limit of ``n / (n + p + q m + 1) * mu_np`` as ``n, p, m`` grow
    with ``n / p -> gamma_ratio`` and ``m / p -> kappa``.
    """
    if not kappa >= 1.0:
        raise InvalidInput(f"kappa must be at least 1, got {kappa}")
    if gamma_ratio < 0:
        raise InvalidInput(f"gamma_ratio must be non-negative, got {gamma_ratio}")
    if math.isinf(gamma_ratio):
        return 1.0
    return 1.0 + (2.0 * math.sqrt(gamma_ratio) - q * kappa) / (1.0 + gamma_ratio + q * kappa)


def _lmax_scatter(x: NDArray[np.float64]) -> float:
    n, p = x.shape
    c = x - x.mean(axis=0)
    # the n x n Gram matrix shares the nonzero spectrum when n < p
    g = c.T @ c if p <= n else c @ c.T
    k = g.shape[0]
    top = linalg.eigh(g, eigvals_only=True, subset_by_index=[k - 1, k - 1])
    return float(top[0]) / n


def simulate_lmax(p: int, n: int, reps: int, seed: int = 0, threads: int = 1) -> NDArray[np.float64]:
    """Largest sample-covariance eigenvalue over ``reps`` draws with ``Sigma = I``.

    ``S`` is mean-centred with divisor ``n``.
    """
    if p < 1 or n < 2:
        raise InvalidInput(f"need p >= 1 and n >= 2, got p={p}, n={n}")
    if reps < 1:
        raise InvalidInput(f"reps must be positive, got {reps}")
    stream = (stream_key("tw-lmax"), p, n)

    def one(rep: int) -> float:
        return _lmax_scatter(replication_rng(seed, stream, rep).standard_normal((n, p)))

    return run_replications(one, reps, threads)


def tw_matching_experiment(
    p: int,
    n: int,
    q: int,
    m: float,
    alpha: float,
    reps: int,
    seed: int = 0,
    threads: int = 1,
    scale: Scale = "shrunk",
) -> tuple[float, NDArray[np.float64], NDArray[np.float64]]:
    """Two-sample KS distance between the centred MLE and MAP statistics.

    Both statistics are computed from the same draws.  The MAP eigenvalue map
    is increasing, so its largest eigenvalue is the map applied to
    ``lmax(S)``.

    Returns
    -------
    ks_distance, samples_mle, samples_map
    """
    if reps < 200:
        raise InvalidInput(f"reps must be at least 200, got {reps}")
    if not alpha > 0:
        raise InvalidInput(f"alpha must be positive, got {alpha}")
    frame = AsymptoticFrame.build(n, p, q, m)
    lmax = simulate_lmax(p, n, reps, seed, threads)
    lmax_map = PiwMap(q, m, alpha)(lmax, n, p)
    mle = np.asarray(centered_stat_mle(lmax, n, p))
    mapped = np.asarray(centered_stat_map(lmax_map, frame, scale))
    ks = float(stats.ks_2samp(mle, mapped).statistic)
    return ks, mle, mapped


def mean_lmax_map(
    p: int, n: int, q: int, m: float, alpha: float, reps: int, seed: int = 0, threads: int = 1
) -> float:
    """Monte-Carlo mean of the largest MAP eigenvalue with ``Sigma = I``."""
    lmax = simulate_lmax(p, n, reps, seed, threads)
    return float(np.mean(PiwMap(q, m, alpha)(lmax, n, p)))
