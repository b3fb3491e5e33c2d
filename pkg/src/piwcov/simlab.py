"""Quadratic-risk simulations for eigenvalue-regularizing estimators.

Two covariance scenarios are supported: the identity and a diagonal
"spiked" spectrum with a few large and many slowly decaying small
eigenvalues.  Linear estimators ``a S + b I`` have a closed-form risk; the
power inverse Wishart MAP is evaluated by Monte Carlo.

Every replication draws from its own seed stream derived from
``(seed, table id, (p, n) cell, replication)``.  All estimators of one
``(p, n)`` cell therefore see the same samples, and results do not depend
on the number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ._parallel import replication_rng, run_replications, stream_key
from .estimators import (
    LinearMap,
    PiwMap,
    _scatter,
    match_linear_regularizer,
    params_from_floor_shrink,
    q2_curve_params,
    quantile_lmax_mle,
    sample_gaussian,
)
from .exceptions import DimensionError, InvalidInput
from .matcore import SymPD, as_array, pd_power

__all__ = [
    "Scenario",
    "EstimatorSpec",
    "RiskReport",
    "TableResult",
    "spiked_diagonal",
    "quadratic_loss",
    "analytic_risk_linear",
    "calibrate_sigma2",
    "mc_risk",
    "mc_risks",
    "reproduce_tables",
    "PN_GRID",
    "FLOORS",
    "SHRINK_FACTORS",
]

PN_GRID: tuple[tuple[int, int], ...] = tuple(
    (p, n) for p in (10, 50, 100) for n in (p // 2, p, 2 * p)
)
FLOORS = (0.8, 1.0, 1.2)
SHRINK_FACTORS = (1.0, 0.9, 0.8)
TABLE_IDS = {"identity": 2, "spiked": 3}


def spiked_diagonal(p: int, sigma2: float = 1.0) -> NDArray[np.float64]:
    """Diagonal of the spiked covariance: ``sigma2 * i**-0.7`` for ``i <= p/10``,
    ``sigma2 * (p/10)**-0.6 * i**-0.1`` beyond.
    """
    if p % 10 != 0 or p <= 0:
        raise InvalidInput(f"p must be a positive multiple of 10, got {p}")
    i = np.arange(1, p + 1, dtype=np.float64)
    k = p // 10
    return np.where(i <= k, i**-0.7, (p / 10.0) ** -0.6 * i**-0.1) * sigma2


@dataclass(frozen=True)
class Scenario:
    """True covariance for a simulation cell."""

    p: int
    n: int
    sigma_true: SymPD
    label: Literal["identity", "spiked"]
    sigma2: float | None = None

    @classmethod
    def identity(cls, p: int, n: int) -> "Scenario":
        return cls(p, n, SymPD.identity(p), "identity")

    @classmethod
    def spiked(cls, p: int, n: int, sigma2: float | None = None) -> "Scenario":
        """Spiked scenario; ``sigma2`` defaults to the MLE-risk calibration."""
        if sigma2 is None:
            sigma2 = calibrate_sigma2(p, n)
        return cls(p, n, SymPD.diag(spiked_diagonal(p, sigma2)), "spiked", sigma2)

    @classmethod
    def make(cls, label: str, p: int, n: int) -> "Scenario":
        if label == "identity":
            return cls.identity(p, n)
        if label == "spiked":
            return cls.spiked(p, n)
        raise InvalidInput(f"unknown scenario {label!r}")

    def to_dict(self) -> dict:
        return {"label": self.label, "p": self.p, "n": self.n, "sigma2": self.sigma2}


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator descriptor: the MLE, a linear map ``a S + b I`` or a power
    inverse Wishart MAP given by its floor and shrink factor.
    """

    kind: Literal["mle", "linear", "piw"]
    slope: float | None = None
    intercept: float | None = None
    q: int | None = None
    floor: float | None = None
    shrink_factor: float | None = None

    @classmethod
    def mle(cls) -> "EstimatorSpec":
        return cls("mle", slope=1.0, intercept=0.0)

    @classmethod
    def linear(cls, slope: float, intercept: float) -> "EstimatorSpec":
        return cls("linear", slope=float(slope), intercept=float(intercept))

    @classmethod
    def piw(cls, q: int, floor: float, shrink_factor: float) -> "EstimatorSpec":
        if q < 1 or int(q) != q:
            raise InvalidInput(f"q must be a positive integer, got {q}")
        if not floor > 0 or not 0 < shrink_factor <= 1:
            raise InvalidInput("floor must be positive and shrink_factor in (0, 1]")
        return cls("piw", q=int(q), floor=float(floor), shrink_factor=float(shrink_factor))

    @property
    def is_linear(self) -> bool:
        return self.kind in ("mle", "linear")

    def eigen_map(self, n: int, p: int) -> LinearMap | PiwMap:
        if self.is_linear:
            return LinearMap(self.slope, self.intercept)
        alpha, m = params_from_floor_shrink(self.floor, self.shrink_factor, self.q, n, p)
        return PiwMap(self.q, m, alpha)

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


@dataclass(frozen=True)
class RiskReport:
    """Risk of one estimator in one scenario.

    ``mc_stderr`` is the sample standard deviation of the per-replication
    loss divided by ``sqrt(reps)``.
    """

    scenario: Scenario
    estimator: EstimatorSpec
    risk_mc: float | None
    mc_stderr: float | None
    risk_analytic: float | None
    reps: int
    seed: int

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario.to_dict(),
            "estimator": self.estimator.to_dict(),
            "reps": self.reps,
            "seed": self.seed,
        }
        if self.risk_mc is not None:
            out["risk_mc"] = self.risk_mc
            out["mc_stderr"] = self.mc_stderr
        if self.risk_analytic is not None:
            out["risk_analytic"] = self.risk_analytic
        return out


def quadratic_loss(sigma: ArrayLike | SymPD, sigma_hat: ArrayLike | SymPD) -> float:
    """Squared Frobenius distance ``tr((Sigma - Sigma_hat)(Sigma - Sigma_hat)^T)``."""
    a = np.asarray(sigma, dtype=np.float64)
    b = np.asarray(sigma_hat, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shapes {a.shape} and {b.shape} differ")
    d = a - b
    return float(np.sum(d * d))


def analytic_risk_linear(sigma: ArrayLike | SymPD, n: int, a: float, b: float) -> float:
    """Exact quadratic risk of ``a S + b I`` when ``n S ~ Wishart(n - 1, Sigma)``."""
    if n < 2:
        raise InvalidInput(f"n must be at least 2, got {n}")
    s = as_array(sigma)
    p = s.shape[0]
    tr = float(np.trace(s))
    tr2 = float(np.sum(s * s))
    f = (n - 1.0) / n
    return (
        a * a * (f * tr2 + (n - 1.0) / n**2 * tr * tr)
        + 2.0 * a * f * (b * tr - tr2)
        + b * b * p
        - 2.0 * b * tr
        + tr2
    )


def calibrate_sigma2(p: int, n: int) -> float:
    """Scale of the spiked spectrum giving the same MLE risk as the identity."""
    d = spiked_diagonal(p, 1.0)
    risk_identity = analytic_risk_linear(np.eye(p), n, 1.0, 0.0)
    per_unit = np.sum(d * d) / n + (n - 1.0) * np.sum(d) ** 2 / n**2
    return float(np.sqrt(risk_identity / per_unit))


def _cell_stream(table_id: int, p: int, n: int) -> tuple[int, int]:
    return (int(table_id), stream_key("cell", p, n))


def _replication_losses(
    scenario: Scenario,
    maps: Sequence[LinearMap | PiwMap],
    reps: int,
    seed: int,
    table_id: int,
    threads: int = 1,
    rotation: NDArray[np.float64] | None = None,
) -> NDArray[np.float64]:
    """Per-replication quadratic losses, shape ``(reps, len(maps))``."""
    p, n = scenario.p, scenario.n
    sigma = scenario.sigma_true.entries
    root = pd_power(scenario.sigma_true, 0.5).entries
    if rotation is not None:
        rotation = np.asarray(rotation, dtype=np.float64)
        sigma = rotation.T @ sigma @ rotation
    sigma_sq = float(np.sum(sigma * sigma))
    stream = _cell_stream(table_id, p, n)

    def one(rep: int) -> NDArray[np.float64]:
        x = sample_gaussian(replication_rng(seed, stream, rep), n, root)
        if rotation is not None:
            x = x @ rotation
        vals, vecs = np.linalg.eigh(_scatter(x))
        vals = np.clip(vals, 0.0, None)
        # diagonal of V^T Sigma V gives tr(Sigma Sigma_hat) for any spectral map
        weights = np.einsum("ik,ij,jk->k", vecs, sigma, vecs)
        out = np.empty(len(maps))
        for j, fmap in enumerate(maps):
            est = fmap(vals, n, p)
            out[j] = sigma_sq - 2.0 * np.dot(est, weights) + np.dot(est, est)
        return out

    return run_replications(one, reps, threads)


def _summaries(losses: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    reps = losses.shape[0]
    # exactly rounded column sums, so the mean does not drift with reps
    mean = np.array([math.fsum(col) for col in losses.T]) / reps
    stderr = np.std(losses, axis=0, ddof=1) / np.sqrt(reps)
    return mean, stderr


def mc_risks(
    scenario: Scenario,
    estimators: Sequence[EstimatorSpec],
    reps: int = 2000,
    seed: int = 0,
    threads: int = 1,
    table_id: int | None = None,
) -> list[RiskReport]:
    """Monte-Carlo risks of several estimators on common samples."""
    if reps < 100:
        raise InvalidInput(f"reps must be at least 100, got {reps}")
    for est in estimators:
        if not isinstance(est, EstimatorSpec):
            raise InvalidInput(f"not an estimator descriptor: {est!r}")
    table_id = TABLE_IDS[scenario.label] if table_id is None else table_id
    maps = [e.eigen_map(scenario.n, scenario.p) for e in estimators]
    losses = _replication_losses(scenario, maps, reps, seed, table_id, threads)
    mean, stderr = _summaries(losses)
    reports = []
    for j, est in enumerate(estimators):
        analytic = (
            analytic_risk_linear(scenario.sigma_true, scenario.n, est.slope, est.intercept)
            if est.is_linear
            else None
        )
        reports.append(RiskReport(scenario, est, float(mean[j]), float(stderr[j]), analytic, reps, seed))
    return reports


def mc_risk(
    scenario: Scenario,
    estimator: EstimatorSpec,
    reps: int = 2000,
    seed: int = 0,
    threads: int = 1,
    table_id: int | None = None,
    rotation: NDArray[np.float64] | None = None,
) -> RiskReport:
    """Monte-Carlo quadratic risk of one estimator.

    ``rotation`` (an orthonormal ``V``) replaces the true covariance by
    ``V^T Sigma V`` and the samples by ``X V``, with the same seed stream.
    """
    if rotation is None:
        return mc_risks(scenario, [estimator], reps, seed, threads, table_id)[0]
    if reps < 100:
        raise InvalidInput(f"reps must be at least 100, got {reps}")
    table_id = TABLE_IDS[scenario.label] if table_id is None else table_id
    fmap = estimator.eigen_map(scenario.n, scenario.p)
    losses = _replication_losses(scenario, [fmap], reps, seed, table_id, threads, rotation)
    mean, stderr = _summaries(losses)
    rotated = Scenario(
        scenario.p, scenario.n, SymPD(rotation.T @ scenario.sigma_true.entries @ rotation),
        scenario.label, scenario.sigma2,
    )
    analytic = (
        analytic_risk_linear(rotated.sigma_true, scenario.n, estimator.slope, estimator.intercept)
        if estimator.is_linear
        else None
    )
    return RiskReport(rotated, estimator, float(mean[0]), float(stderr[0]), analytic, reps, seed)


@dataclass
class TableResult:
    """Rows of a reproduced table plus the matching parameters used."""

    which: int
    reports: list[RiskReport]
    matching: dict[str, dict] = field(default_factory=dict)
    reps: int = 0
    seed: int = 0

    def find(self, p: int, n: int, q: int, floor: float, shrink_factor: float) -> RiskReport:
        for r in self.reports:
            e = r.estimator
            if (r.scenario.p, r.scenario.n) != (p, n):
                continue
            if e.q == q and e.floor == floor and e.shrink_factor == shrink_factor:
                return r
        raise KeyError((p, n, q, floor, shrink_factor))

    def layout(self) -> list[list[str]]:
        """Rows in the printed table layout: ``(p,n)``, ``q``, then floor x shrink cells."""
        if self.which == 1:
            header = ["n", "p=10", "p=50", "p=100"]
            rows = [header]
            for label, mult in (("n=p/2", 0.5), ("n=p", 1.0), ("n=2p", 2.0)):
                row = [label]
                for p in (10, 50, 100):
                    hits = [r for r in self.reports if r.scenario.p == p and r.scenario.n == int(p * mult)]
                    row.append(f"{hits[0].risk_analytic:.17g}" if hits else "")
                rows.append(row)
            return rows
        header = ["(p,n)", "q"] + [f"floor={f}/shrink={s}" for f in FLOORS for s in SHRINK_FACTORS]
        rows = [header]
        cells = sorted({(r.scenario.p, r.scenario.n) for r in self.reports}, key=PN_GRID.index)
        for p, n in cells:
            for q in (1, 2):
                row = [f"({p},{n})", f"q={q}"]
                for f in FLOORS:
                    for s in SHRINK_FACTORS:
                        try:
                            row.append(f"{self.find(p, n, q, f, s).risk_mc:.17g}")
                        except KeyError:
                            row.append("")
                rows.append(row)
        return rows


def _matched_linear_spec(floor: float, shrink_factor: float, n: int, p: int, L: float) -> tuple[EstimatorSpec, dict]:
    alpha, m = params_from_floor_shrink(floor, shrink_factor, 2, n, p)
    a, b = q2_curve_params(alpha, m, n, p)
    slope = match_linear_regularizer((a, b), floor, L)
    spec = EstimatorSpec("linear", slope=slope, intercept=floor, q=1, floor=floor, shrink_factor=shrink_factor)
    return spec, {"a": a, "b": b, "a_prime": slope, "b_prime": floor, "alpha_q2": alpha, "m_q2": m}


def reproduce_tables(
    which: int,
    cells: Iterable[tuple[int, int]] | None = None,
    reps: int = 2000,
    seed: int = 0,
    threads: int = 1,
    quantile_reps: int = 10_000,
) -> TableResult:
    """Recompute one of the three risk tables.

    Table 1 is the analytic MLE risk. Tables 2 (identity) and 3 (spiked)
    cover floors ``{0.8, 1, 1.2}`` and shrink factors ``{1, 0.9, 0.8}``;
    ``q = 2`` rows are power inverse Wishart MAPs and ``q = 1`` rows the
    linear maps matched to them on ``[0, L]``, ``L`` being the 99%
    quantile of the largest MLE eigenvalue.
    """
    if which not in (1, 2, 3):
        raise InvalidInput(f"which must be 1, 2 or 3, got {which}")
    grid = list(PN_GRID) if cells is None else [tuple(c) for c in cells]
    for c in grid:
        if c not in PN_GRID:
            raise InvalidInput(f"cell {c} is not on the (p, n) grid")
    result = TableResult(which, [], {}, reps, seed)
    if which == 1:
        for p, n in grid:
            scen = Scenario.identity(p, n)
            risk = analytic_risk_linear(scen.sigma_true, n, 1.0, 0.0)
            result.reports.append(RiskReport(scen, EstimatorSpec.mle(), None, None, risk, 0, seed))
        return result

    label = "identity" if which == 2 else "spiked"
    for p, n in grid:
        scen = Scenario.make(label, p, n)
        L = quantile_lmax_mle(scen.sigma_true, n, 0.99, quantile_reps, seed, threads)
        specs: list[EstimatorSpec] = []
        cell_info: dict = {"L": L, "sigma2": scen.sigma2, "matched": {}}
        for floor in FLOORS:
            for sf in SHRINK_FACTORS:
                lin, info = _matched_linear_spec(floor, sf, n, p, L)
                specs.append(lin)
                specs.append(EstimatorSpec.piw(2, floor, sf))
                cell_info["matched"][f"floor={floor},shrink={sf}"] = info
        result.reports.extend(mc_risks(scen, specs, reps, seed, threads, TABLE_IDS[label]))
        result.matching[f"({p},{n})"] = cell_info
    return result

