"""Panel regression engine: FE absorption, clustered covariance, lag models and decay kernels."""

from .design import PanelDesign
from .fixed_effects import absorb_fixed_effects
from .lags import add_lags, cumulative_coefficients, distributed_lag, lag_name
from .nlls import DEFAULT_LAMBDA_GRID, KernelFit, gauss_newton, nlls_exp_decay
from .ols import RegressionFit, clustered_covariance, ols_clustered, wald_equal
from .variance import variance_share

__all__ = [
    "DEFAULT_LAMBDA_GRID",
    "KernelFit",
    "PanelDesign",
    "RegressionFit",
    "absorb_fixed_effects",
    "add_lags",
    "clustered_covariance",
    "cumulative_coefficients",
    "distributed_lag",
    "gauss_newton",
    "lag_name",
    "nlls_exp_decay",
    "ols_clustered",
    "variance_share",
    "wald_equal",
]
