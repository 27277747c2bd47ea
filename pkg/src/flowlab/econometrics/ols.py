from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy import linalg, stats
import statsmodels.api as sm
from statsmodels.stats import sandwich_covariance as sw

from ..errors import EstimationError, InputValidationError
from ..utils.log import setup_logger
from .design import PanelDesign
from .fixed_effects import FE_TOL, absorb_fixed_effects

SCHEMA_VERSION = 1
CLIP_TOL = -1e-12

@dataclass(frozen=True, eq=False)
class RegressionFit:
    columns: tuple[str, ...]
    coef: np.ndarray
    cov: np.ndarray
    n_obs: int
    r2: float
    within_r2: float
    response: str = "y"
    fe: tuple[str, ...] = ()
    clusters: tuple[str, ...] = ()
    n_clusters: tuple[int, ...] = ()
    fe_iterations: int = 0
    fe_gap: float = 0.0
    lag_columns: tuple[str, ...] = ()
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    @property
    def t(self) -> np.ndarray:
        se = self.se
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.coef / se
        return np.where(se > 0, out, np.copysign(np.inf, self.coef))

    def index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError as exc:
            raise KeyError(f"no coefficient named {name!r}") from exc

    def coefficient(self, name: str) -> float:
        return float(self.coef[self.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.index(name)])

    def tstat(self, name: str) -> float:
        return float(self.t[self.index(name)])

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({"name": self.columns, "estimate": self.coef, "se": self.se, "t": self.t})

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "response": self.response,
            "n_obs": self.n_obs,
            "r2": self.r2,
            "within_r2": self.within_r2,
            "fixed_effects": list(self.fe),
            "clusters": list(self.clusters),
            "n_clusters": list(self.n_clusters),
            "fe_iterations": self.fe_iterations,
            "fe_gap": self.fe_gap,
            "coefficients": [
                {"name": name, "estimate": float(b), "se": float(s), "t": float(t)}
                for name, b, s, t in zip(self.columns, self.coef, self.se, self.t)
            ],
            "notes": self.notes,
        }

def check_rank(X: np.ndarray, columns: Sequence[str]) -> None:
    """Raise naming the columns a pivoted QR finds linearly dependent on the rest."""
    if X.shape[1] == 0:
        return
    _, r, pivot = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int((diag > tol).sum()) if diag.size and diag[0] > 0 else 0
    if rank < X.shape[1]:
        collinear = [columns[p] for p in pivot[rank:]]
        raise EstimationError(
            f"regressor matrix is rank deficient; collinear columns: {', '.join(collinear)}",
            diagnostics={"rank": rank, "n_columns": X.shape[1], "collinear": collinear},
        )

def _dof_factor(n_groups: int, n_obs: int, n_params: int) -> float:
    return n_groups / (n_groups - 1) * (n_obs - 1) / (n_obs - n_params)

def clip_psd(cov: np.ndarray, logger_name: str = "flowlab.econometrics") -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    if cov.size == 0:
        return cov
    values, vectors = np.linalg.eigh(cov)
    if values.min() >= 0:
        return cov
    if values.min() < CLIP_TOL:
        setup_logger(logger_name).warning(
            "covariance_eigen_clipped",
            extra={"min_eigenvalue": float(values.min()), "n_negative": int((values < 0).sum())},
        )
    clipped = (vectors * np.clip(values, 0.0, None)) @ vectors.T
    return 0.5 * (clipped + clipped.T)

def clustered_covariance(
    scores_matrix: np.ndarray,
    resid: np.ndarray,
    bread: np.ndarray,
    clusters: Sequence[np.ndarray],
    n_params: int | None = None,
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Cluster sandwich; two dimensions combine V_A + V_B - V_AB, the joint term using the smaller G.

    Meats come from statsmodels' group-sum outer products; only the dof factors and the clip are ours.
    """
    n_obs, k = scores_matrix.shape
    n_params = k if n_params is None else n_params
    if n_obs <= n_params:
        raise EstimationError(f"need more observations than parameters (N={n_obs}, K={n_params})")
    scores = scores_matrix * resid[:, None]

    def sandwich(codes: np.ndarray) -> np.ndarray:
        return bread @ sw.S_crosssection(scores, codes) @ bread

    if not clusters:
        # heteroskedasticity-robust (HC1)
        factor = n_obs / (n_obs - n_params)
        return clip_psd(factor * bread @ sw.S_white_simple(scores) @ bread), ()

    counts = tuple(int(np.unique(codes).size) for codes in clusters)
    for size in counts:
        if size < 2:
            raise EstimationError("a cluster dimension has a single group; clustered covariance undefined")
    first = clusters[0]
    cov = _dof_factor(counts[0], n_obs, n_params) * sandwich(first)
    if len(clusters) == 2:
        second = clusters[1]
        joint = pd.MultiIndex.from_arrays([first, second]).factorize()[0]
        cov = cov + _dof_factor(counts[1], n_obs, n_params) * sandwich(second)
        cov = cov - _dof_factor(min(counts), n_obs, n_params) * sandwich(joint)
    return clip_psd(cov), counts

def ols_clustered(design: PanelDesign, *, fe_tol: float = FE_TOL, lag_columns: Sequence[str] = ()) -> RegressionFit:
    """Least squares on the within-transformed design with clustered covariance."""
    if design.n_obs == 0:
        raise EstimationError("no observations left for estimation")
    raw_tss = design.raw_tss
    absorbed = absorb_fixed_effects(design, tol=fe_tol)
    X, y = absorbed.X, absorbed.y
    n_obs, k = X.shape
    if n_obs <= k:
        raise EstimationError(f"need more observations than regressors (N={n_obs}, K={k})")
    check_rank(X, absorbed.columns)

    result = sm.OLS(y, X).fit()
    coef = np.asarray(result.params)
    resid = np.asarray(result.resid)
    bread = np.asarray(result.normalized_cov_params)
    cov, counts = clustered_covariance(X, resid, bread, absorbed.clusters)

    ssr = float(result.ssr)
    within_tss = float(((y - y.mean()) ** 2).sum()) if absorbed.absorbed else raw_tss
    r2 = 1.0 - ssr / raw_tss if raw_tss > 0 else float("nan")
    within_r2 = 1.0 - ssr / within_tss if within_tss > 0 else float("nan")
    return RegressionFit(
        columns=absorbed.columns,
        coef=coef,
        cov=cov,
        n_obs=n_obs,
        r2=r2,
        within_r2=within_r2,
        response=design.response,
        fe=design.fe_names,
        clusters=design.cluster_names,
        n_clusters=counts,
        fe_iterations=absorbed.fe_iterations,
        fe_gap=absorbed.fe_gap,
        lag_columns=tuple(lag_columns),
    )

def wald_equal(fit: RegressionFit, a: str, b: str) -> tuple[float, float]:
    """Chi-square(1) test of coefficient a = coefficient b."""
    ia, ib = fit.index(a), fit.index(b)
    contrast = np.zeros(len(fit.columns))
    contrast[ia], contrast[ib] = 1.0, -1.0
    diff = float(contrast @ fit.coef)
    variance = float(contrast @ fit.cov @ contrast)
    if variance <= 0:
        raise InputValidationError(f"variance of {a} - {b} is not positive")
    stat = diff * diff / variance
    return stat, float(stats.chi2.sf(stat, df=1))
