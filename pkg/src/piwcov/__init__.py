"""Covariance estimation under the power inverse Wishart prior."""

from importlib.metadata import PackageNotFoundError, version

from .estimators import (
    FloorShrink,
    LinearMap,
    MapSolution,
    PiwMap,
    floor_shrink,
    iw_map,
    map_eigenvalues,
    match_linear_regularizer,
    params_from_floor_shrink,
    piw_map,
    q2_curve_params,
    quantile_lmax_mle,
    regularization_curve,
    sample_covariance,
    solve_eigen_equation,
)
from .exceptions import (
    DimensionError,
    InsufficientData,
    InvalidInput,
    InvalidMatrix,
    NotDiagonalScalePrior,
    NotPositiveDefinite,
    NumericalError,
    PiwError,
    SingularBlock,
    SolverError,
)
from .matcore import SymPD, pd_power, psd_order_leq, sym_eig, whiten
from .prior import PiwPrior, log_density_ratio_curve, log_unnormalized_density, prior_mode

try:
    __version__ = version("piwcov")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "SymPD",
    "sym_eig",
    "pd_power",
    "whiten",
    "psd_order_leq",
    "PiwPrior",
    "log_unnormalized_density",
    "prior_mode",
    "log_density_ratio_curve",
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
    "PiwError",
    "InvalidInput",
    "InvalidMatrix",
    "DimensionError",
    "NotPositiveDefinite",
    "InsufficientData",
    "NotDiagonalScalePrior",
    "SingularBlock",
    "NumericalError",
    "SolverError",
]
