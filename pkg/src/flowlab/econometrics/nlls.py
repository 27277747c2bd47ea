from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np
import pandas as pd

from ..errors import EstimationError, InputValidationError
from ..utils.log import setup_logger
from .design import PanelDesign
from .fixed_effects import FE_TOL, absorb_fixed_effects
from .ols import SCHEMA_VERSION, clustered_covariance

DEFAULT_LAMBDA_GRID = (0.005, 0.01, 0.05, 0.1, 0.3, 0.5, 1.0)
KINDS = ("impact", "chasing")

@dataclass(frozen=True)
class GaussNewtonResult:
    x: np.ndarray
    ssr: float
    iterations: int
    converged: bool
    message: str
    grad_max: float

def gauss_newton(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    *,
    feasible: Callable[[np.ndarray], bool] | None = None,
    max_iter: int = 200,
    ftol: float = 1e-10,
    gtol: float = 1e-8,
    max_halvings: int = 50,
) -> GaussNewtonResult:
    """Damped Gauss-Newton for min ||residual(x)||^2, residual = y - model(x), jacobian = d model / dx.

    The step is halved until SSR decreases; infeasible trial points count as failed steps.
    """
    feasible = feasible or (lambda _: True)
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    ssr = float(r @ r)
    scale = max(ssr, 1e-300)
    grad_max = float("inf")
    for iteration in range(1, max_iter + 1):
        J = jacobian(x)
        grad_max = float(np.max(np.abs(J.T @ r))) if J.size else 0.0
        if grad_max < gtol or ssr <= 1e-28 * scale:
            return GaussNewtonResult(x, ssr, iteration - 1, True, "gradient", grad_max)
        step = np.linalg.lstsq(J, r, rcond=None)[0]
        alpha = 1.0
        accepted = False
        for halving in range(max_halvings + 1):
            trial = x + alpha * step
            if feasible(trial):
                r_trial = residual(trial)
                ssr_trial = float(r_trial @ r_trial)
                if np.isfinite(ssr_trial) and ssr_trial < ssr:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            converged = grad_max <= 1e-6 * ssr
            return GaussNewtonResult(x, ssr, iteration, converged, "step_failure", grad_max)
        change = (ssr - ssr_trial) / max(ssr, 1e-300)
        x, r, ssr = trial, r_trial, ssr_trial
        if change < ftol:
            J = jacobian(x)
            grad_max = float(np.max(np.abs(J.T @ r))) if J.size else 0.0
            return GaussNewtonResult(x, ssr, iteration, True, "ssr_change", grad_max)
    return GaussNewtonResult(x, ssr, max_iter, False, "max_iter", grad_max)

@dataclass(frozen=True, eq=False)
class KernelFit:
    """Exponential-decay kernel: impact (theta0, theta1, lambda_theta) or chasing (beta, lambda_beta)."""

    kind: str
    names: tuple[str, ...]
    params: np.ndarray
    cov: np.ndarray
    ssr: float
    iterations: int
    converged: bool
    n_obs: int
    max_lag: int
    starts: tuple[dict[str, Any], ...] = ()

    @property
    def reportable(self) -> bool:
        return self.converged

    def value(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def se(self, name: str) -> float:
        i = self.names.index(name)
        return float(np.sqrt(max(self.cov[i, i], 0.0)))

    def kernel(self, max_lag: int | None = None) -> np.ndarray:
        lags = np.arange((self.max_lag if max_lag is None else max_lag) + 1, dtype=float)
        if self.kind == "impact":
            theta0, theta1, lam = self.params
            out = theta1 * np.exp(-lam * (lags - 1.0))
            out[0] = theta0
            return out
        beta, lam = self.params
        # normalized over the fitted window so beta stays the cumulative loading
        norm = np.exp(-lam * np.arange(self.max_lag + 1, dtype=float)).sum()
        return beta * np.exp(-lam * lags) / norm

    def cumulative(self, max_lag: int | None = None) -> pd.DataFrame:
        kernel = self.kernel(max_lag)
        return pd.DataFrame({"lag": np.arange(kernel.size), "coef": kernel, "cum_coef": np.cumsum(kernel)})

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "converged": self.converged,
            "reportable": self.reportable,
            "iterations": self.iterations,
            "ssr": self.ssr,
            "n_obs": self.n_obs,
            "max_lag": self.max_lag,
            "cumulative_kernel": float(self.kernel().sum()),
            "parameters": [
                {"name": name, "estimate": float(value), "se": self.se(name)}
                for name, value in zip(self.names, self.params)
            ],
            "starts": list(self.starts),
        }

def _partial_out(controls: np.ndarray, target: np.ndarray) -> np.ndarray:
    if controls.shape[1] == 0:
        return target
    coef = np.linalg.lstsq(controls, target, rcond=None)[0]
    return target - controls @ coef

class _ExpDecayModel:
    """Impact: theta0 on lag 0 plus theta1 e^{-lam (s-1)} on lags s >= 1.

    Chasing: beta times the normalized weights e^{-lam s} / sum_u e^{-lam u}, so beta is the cumulative loading.
    """

    def __init__(self, kind: str, lags: np.ndarray, y: np.ndarray) -> None:
        self.kind = kind
        self.lags = lags
        self.y = y
        n_lags = lags.shape[1]
        offset = 1.0 if kind == "impact" else 0.0
        self.distance = np.arange(n_lags, dtype=float) - offset

    def _block(self) -> np.ndarray:
        return self.lags[:, 1:] if self.kind == "impact" else self.lags

    def _distance(self) -> np.ndarray:
        return self.distance[1:] if self.kind == "impact" else self.distance

    def weighted(self, lam: float) -> tuple[np.ndarray, np.ndarray]:
        """Lag block times the decay weights, and times their derivative in lam."""
        distance = self._distance()
        decay = np.exp(-lam * distance)
        block = self._block()
        if self.kind == "impact":
            return block @ decay, block @ (-distance * decay)
        weights = decay / decay.sum()
        mean_distance = float(weights @ distance)
        return block @ weights, block @ (weights * (mean_distance - distance))

    def predict(self, params: np.ndarray) -> np.ndarray:
        if self.kind == "impact":
            theta0, theta1, lam = params
            level, _ = self.weighted(lam)
            return theta0 * self.lags[:, 0] + theta1 * level
        beta, lam = params
        level, _ = self.weighted(lam)
        return beta * level

    def residual(self, params: np.ndarray) -> np.ndarray:
        return self.y - self.predict(params)

    def jacobian(self, params: np.ndarray) -> np.ndarray:
        if self.kind == "impact":
            _, theta1, lam = params
            level, slope = self.weighted(lam)
            return np.column_stack([self.lags[:, 0], level, theta1 * slope])
        beta, lam = params
        level, slope = self.weighted(lam)
        return np.column_stack([level, beta * slope])

    def start(self, lam: float) -> np.ndarray:
        """Linear amplitudes by least squares at a fixed decay rate."""
        level, _ = self.weighted(lam)
        if self.kind == "impact":
            basis = np.column_stack([self.lags[:, 0], level])
        else:
            basis = level[:, None]
        amplitudes = np.linalg.lstsq(basis, self.y, rcond=None)[0]
        return np.append(amplitudes, lam)

def nlls_exp_decay(
    kind: str,
    design: PanelDesign,
    lag_columns: Sequence[str],
    *,
    init_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    fe_tol: float = FE_TOL,
    logger_name: str = "flowlab.econometrics",
) -> KernelFit:
    """Fit an exponential-decay lag kernel after absorbing FE and partialling out controls.

    Every grid start runs Gauss-Newton; the converged fit with the smallest SSR wins.
    """
    if kind not in KINDS:
        raise InputValidationError(f"kind must be one of {KINDS}, got {kind!r}")
    min_lags = 2 if kind == "impact" else 1
    if len(lag_columns) < min_lags:
        raise InputValidationError(f"{kind} kernel needs at least {min_lags} lag columns")
    logger = setup_logger(logger_name)
    absorbed = absorb_fixed_effects(design, tol=fe_tol)
    lag_idx = [absorbed.columns.index(name) for name in lag_columns]
    control_idx = [i for i in range(len(absorbed.columns)) if i not in lag_idx]
    controls = absorbed.X[:, control_idx]
    y = _partial_out(controls, absorbed.y)
    lags = _partial_out(controls, absorbed.X[:, lag_idx])
    model = _ExpDecayModel(kind, lags, y)
    names = ("theta0", "theta1", "lambda_theta") if kind == "impact" else ("beta", "lambda_beta")

    def feasible(params: np.ndarray) -> bool:
        return bool(params[-1] > 0)

    starts: list[dict[str, Any]] = []
    best: GaussNewtonResult | None = None
    for lam in init_grid:
        result = gauss_newton(model.residual, model.jacobian, model.start(lam), feasible=feasible)
        starts.append(
            {
                "lambda_start": float(lam),
                "converged": result.converged,
                "message": result.message,
                "iterations": result.iterations,
                "ssr": result.ssr,
                "params": [float(v) for v in result.x],
            }
        )
        if result.converged and (best is None or result.ssr < best.ssr):
            best = result
    if best is None:
        raise EstimationError(f"{kind} kernel: Gauss-Newton failed from every grid start", diagnostics={"starts": starts})

    J = model.jacobian(best.x)
    resid = model.residual(best.x)
    bread = np.linalg.pinv(J.T @ J)
    cov, _ = clustered_covariance(J, resid, bread, absorbed.clusters, n_params=len(names) + len(control_idx))
    logger.info(
        "fit_end",
        extra={"model": f"nlls_{kind}", "iterations": best.iterations, "ssr": best.ssr, "n_obs": int(y.size)},
    )
    return KernelFit(
        kind=kind,
        names=names,
        params=best.x,
        cov=cov,
        ssr=best.ssr,
        iterations=best.iterations,
        converged=best.converged,
        n_obs=int(y.size),
        max_lag=len(lag_columns) - 1,
        starts=tuple(starts),
    )
