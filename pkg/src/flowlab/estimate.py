from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import pandas as pd

from .econometrics import (
    KernelFit,
    PanelDesign,
    RegressionFit,
    add_lags,
    cumulative_coefficients,
    distributed_lag,
    lag_name,
    nlls_exp_decay,
    ols_clustered,
)
from .econometrics.fixed_effects import FE_TOL
from .errors import EstimationError, InputValidationError
from .illiquidity import IlliquiditySettings, LiquidityMeasures, liquidity_measures
from .impact import AitSeries, ImpactParams, ait_series, signed_power
from .model import MarketPanel
from .utils.log import setup_logger

MOMENTUM_WINDOW = 20

FE_PRESETS: dict[str, tuple[str, ...]] = {
    "fund-time": ("fund_day",),
    "fund,time": ("fund_id", "date"),
    "time,stock": ("date", "security_id"),
    "time": ("date",),
    "fund": ("fund_id",),
    "none": (),
}
CLUSTER_KEYS = {"day": "date", "stockday": "stockday", "fund": "fund_id", "stock": "security_id"}

STOCK_CONTROLS = ("pos_illiq_lag", "momentum", "vol_lag")
TRIPLE_CONTROLS = ("pos_conc_lag", "x_pos_conc")
FUND_CONTROLS = ("fpow", "illiq_lag", "conc_lag", "x_conc")
AIT_CONTROLS = ("momentum", "vol_lag")

def parse_fe(spec: str) -> tuple[str, ...]:
    if spec not in FE_PRESETS:
        raise InputValidationError(f"unknown fixed-effect spec {spec!r}; choose from {sorted(FE_PRESETS)}")
    return FE_PRESETS[spec]

def parse_clusters(spec: str) -> tuple[str, ...]:
    names = [part.strip() for part in spec.split(",") if part.strip()]
    unknown = [name for name in names if name not in CLUSTER_KEYS]
    if unknown:
        raise InputValidationError(f"unknown cluster dimension(s) {unknown}; choose from {sorted(CLUSTER_KEYS)}")
    return tuple(CLUSTER_KEYS[name] for name in names)

def trailing_compound(returns: np.ndarray, window: int = MOMENTUM_WINDOW) -> np.ndarray:
    """Compounded return over rows t-window..t-1; NaN unless all days are present."""
    logs = np.log1p(returns)
    finite = np.isfinite(logs)
    csum = np.vstack([np.zeros((1, logs.shape[1])), np.cumsum(np.where(finite, logs, 0.0), axis=0)])
    ccount = np.vstack([np.zeros((1, logs.shape[1])), np.cumsum(finite, axis=0)])
    out = np.full(returns.shape, np.nan)
    if returns.shape[0] > window:
        total = csum[window:-1] - csum[:-window - 1]
        count = ccount[window:-1] - ccount[:-window - 1]
        out[window:] = np.where(count == window, np.expm1(total), np.nan)
    return out

def _measures(panel: MarketPanel, params: ImpactParams, measures: LiquidityMeasures | None) -> LiquidityMeasures:
    if measures is not None and measures.eta == params.eta:
        return measures
    return liquidity_measures(panel, IlliquiditySettings(eta=params.eta))

def fund_day_frame(
    panel: MarketPanel,
    params: ImpactParams,
    measures: LiquidityMeasures | None = None,
) -> pd.DataFrame:
    """Fund-day regressors: f^eta, prior-day illiquidity and concentration, and their interactions."""
    measures = _measures(panel, params, measures)
    view = panel.dense
    fpow = signed_power(view.flow_rel, params.eta)
    illiq_lag = view.lagged(measures.fund_illiq_direct)
    conc_lag = view.lagged(measures.fund_conc)
    frame = view.fund_frame(
        {
            "ret": view.fund_return,
            "flow": view.flow_rel,
            "fpow": fpow,
            "illiq_lag": illiq_lag,
            "conc_lag": conc_lag,
            "size_lag": view.lagged(measures.fund_size),
            "x_impact": fpow * illiq_lag,
            "x_conc": fpow * conc_lag,
            "aum_lag": view.lagged(view.aum),
        }
    )
    frame["is_active"] = view.is_active[pd.Index(view.fund_ids).get_indexer(frame["fund_id"])]
    return frame

def stock_day_frame(
    panel: MarketPanel,
    params: ImpactParams,
    measures: LiquidityMeasures | None = None,
) -> pd.DataFrame:
    """(fund, security, day) rows for positions held the prior day by funds with a flow today."""
    measures = _measures(panel, params, measures)
    view = panel.dense
    n_dates, _, n_secs = view.shape
    fpow = signed_power(view.flow_rel, params.eta)
    momentum = trailing_compound(view.ret)
    mask = (view.weights[:-1] > 0) & np.isfinite(fpow[1:])[:, :, None]
    t_prev, i_idx, n_idx = np.nonzero(mask)
    t_idx = t_prev + 1
    pos_illiq = measures.pos_illiq_direct[t_prev, i_idx, n_idx]
    pos_conc = measures.pos_conc[t_prev, i_idx, n_idx]
    flow_term = fpow[t_idx, i_idx]
    return pd.DataFrame(
        {
            "date": view.dates[t_idx],
            "fund_id": view.fund_ids[i_idx],
            "security_id": view.security_ids[n_idx],
            "ret": view.ret[t_idx, n_idx],
            "fpow": flow_term,
            "pos_illiq_lag": pos_illiq,
            "x_pos": flow_term * pos_illiq,
            "pos_conc_lag": pos_conc,
            "x_pos_conc": flow_term * pos_conc,
            "momentum": momentum[t_idx, n_idx],
            "vol_lag": view.volatility[t_prev, n_idx],
            "fund_day": i_idx.astype(np.int64) * n_dates + t_idx,
            "stockday": t_idx.astype(np.int64) * n_secs + n_idx,
        }
    )

def security_day_frame(panel: MarketPanel, series: AitSeries | None = None) -> pd.DataFrame:
    view = panel.dense
    series = series or ait_series(panel)
    momentum = trailing_compound(view.ret)
    frame = view.security_frame(
        {
            "ret": view.ret,
            "ait": series.ait,
            "ait_hat": series.ait_hat,
            "sqrt_ait": series.sqrt_ait,
            "momentum": momentum,
            "vol_lag": view.lagged(view.volatility),
        }
    )
    frame["stockday"] = frame.index.to_numpy()
    return frame

def _fit(frame: pd.DataFrame, response: str, regressors: Sequence[str], fe: Sequence[str], cluster: Sequence[str], model: str, fe_tol: float = FE_TOL) -> RegressionFit:
    logger = setup_logger("flowlab.estimate")
    design = PanelDesign.from_frame(frame, response, list(regressors), fe=fe, cluster=cluster)
    logger.info("fit_start", extra={"model": model, "n_obs": design.n_obs, "fe": list(fe), "clusters": list(cluster)})
    fit = ols_clustered(design, fe_tol=fe_tol)
    logger.info("fit_end", extra={"model": model, "n_obs": fit.n_obs, "fe_iterations": fit.fe_iterations, "within_r2": fit.within_r2})
    return fit

def estimate_stock_impact(
    panel: MarketPanel,
    params: ImpactParams,
    *,
    fe: Sequence[str] = ("fund_day",),
    cluster: Sequence[str] = ("date", "stockday"),
    controls: Sequence[str] = STOCK_CONTROLS,
    triple_difference: bool = False,
    measures: LiquidityMeasures | None = None,
    fe_tol: float = FE_TOL,
) -> RegressionFit:
    """Security returns on f^eta times the fund's prior-day position illiquidity (coefficient `x_pos`)."""
    frame = stock_day_frame(panel, params, measures)
    regressors = ["x_pos", *controls, *(TRIPLE_CONTROLS if triple_difference else ())]
    if "fund_day" not in fe:
        regressors.insert(1, "fpow")
    return _fit(frame, "ret", regressors, fe, cluster, "stock_impact", fe_tol)

def estimate_fund_impact(
    panel: MarketPanel,
    params: ImpactParams,
    *,
    fe: Sequence[str] = ("fund_id", "date"),
    cluster: Sequence[str] = ("date", "fund_id"),
    controls: Sequence[str] = FUND_CONTROLS,
    flow_lags: int = 5,
    measures: LiquidityMeasures | None = None,
    fe_tol: float = FE_TOL,
) -> RegressionFit:
    """Fund returns on f^eta I_{t-1} (coefficient `x_impact`, the impact scale theta)."""
    frame = fund_day_frame(panel, params, measures)
    lags = list(range(1, flow_lags + 1))
    if lags:
        frame = add_lags(frame, "flow", lags, panel.calendar)
    regressors = ["x_impact", *controls, *(lag_name("flow", lag) for lag in lags)]
    return _fit(frame, "ret", regressors, fe, cluster, "fund_impact", fe_tol)

def fund_horse_race(
    panel: MarketPanel,
    params: ImpactParams,
    *,
    fe: Sequence[str] = ("fund_id", "date"),
    cluster: Sequence[str] = ("date", "fund_id"),
    measures: LiquidityMeasures | None = None,
    fe_tol: float = FE_TOL,
) -> dict[str, RegressionFit]:
    """Square-root specification against the linear one (eta = 1, market-cap supply, no prefactor)."""
    frame = fund_day_frame(panel, params, measures)
    legacy = liquidity_measures(panel, IlliquiditySettings.legacy())
    view = panel.dense
    linear = view.flow_rel * view.lagged(legacy.fund_illiq_direct)
    frame = frame.merge(view.fund_frame({"x_linear": linear}), on=["date", "fund_id"], how="left")
    return {
        "sqrt": _fit(frame, "ret", ["x_impact", "fpow", "illiq_lag"], fe, cluster, "horse_race_sqrt", fe_tol),
        "linear": _fit(frame, "ret", ["x_linear", "fpow", "illiq_lag"], fe, cluster, "horse_race_linear", fe_tol),
        "both": _fit(frame, "ret", ["x_impact", "x_linear", "fpow", "illiq_lag"], fe, cluster, "horse_race_both", fe_tol),
    }

def estimate_ait(
    panel: MarketPanel,
    *,
    regressors: Sequence[str] = ("ait_hat",),
    fe: Sequence[str] = ("date", "security_id"),
    cluster: Sequence[str] = ("date", "security_id"),
    controls: Sequence[str] = AIT_CONTROLS,
    baskets: np.ndarray | None = None,
    fe_tol: float = FE_TOL,
) -> RegressionFit:
    """Security returns on arbitrage-induced trading (AIT, AIT-hat, signed sqrt AIT, or several)."""
    frame = security_day_frame(panel, ait_series(panel, baskets))
    return _fit(frame, "ret", [*regressors, *controls], fe, cluster, "ait", fe_tol)

def ait_horse_race(panel: MarketPanel, baskets: np.ndarray | None = None, **kwargs: Any) -> dict[str, RegressionFit]:
    return {
        "ait": estimate_ait(panel, regressors=("ait",), baskets=baskets, **kwargs),
        "ait_hat": estimate_ait(panel, regressors=("ait_hat",), baskets=baskets, **kwargs),
        "sqrt_ait": estimate_ait(panel, regressors=("sqrt_ait",), baskets=baskets, **kwargs),
        "all": estimate_ait(panel, regressors=("ait", "ait_hat", "sqrt_ait"), baskets=baskets, **kwargs),
    }

@dataclass(frozen=True, eq=False)
class LagModelResult:
    fit: RegressionFit
    cumulative: pd.DataFrame
    kernel: KernelFit | None

    def to_dict(self) -> dict[str, Any]:
        payload = {"fit": self.fit.to_dict(), "cumulative_at_max_lag": float(self.cumulative["cum_coef"].iloc[-1])}
        payload["cumulative_se_at_max_lag"] = float(self.cumulative["cum_se"].iloc[-1])
        if self.kernel is not None:
            payload["kernel"] = self.kernel.to_dict()
        return payload

def _kernel_or_none(kind: str, design: PanelDesign, lag_cols: Sequence[str], fit_kernel: bool, fe_tol: float) -> KernelFit | None:
    if not fit_kernel:
        return None
    try:
        return nlls_exp_decay(kind, design, lag_cols, fe_tol=fe_tol)
    except EstimationError as exc:
        setup_logger("flowlab.estimate").warning("kernel_fit_failed", extra={"kind": kind, "error": str(exc)})
        return None

def estimate_reversal(
    panel: MarketPanel,
    params: ImpactParams,
    *,
    max_lag: int = 40,
    regressor: str = "fund",
    fit_kernel: bool = True,
    measures: LiquidityMeasures | None = None,
    baskets: np.ndarray | None = None,
    fe_tol: float = FE_TOL,
) -> LagModelResult:
    """Distributed lag of returns on S+1 lags of flow-driven trades; optional decay-kernel NLLS."""
    if regressor == "fund":
        frame = fund_day_frame(panel, params, measures)
        fit, design = distributed_lag(
            frame, "ret", "x_impact", max_lag, panel.calendar,
            fe=("fund_id", "date"), cluster=("date", "fund_id"), entity="fund_id",
        )
    elif regressor == "ait":
        frame = security_day_frame(panel, ait_series(panel, baskets))
        fit, design = distributed_lag(
            frame, "ret", "ait_hat", max_lag, panel.calendar,
            fe=("date", "security_id"), cluster=("date", "security_id"), entity="security_id",
        )
    else:
        raise InputValidationError(f"regressor must be 'fund' or 'ait', got {regressor!r}")
    cumulative = cumulative_coefficients(fit)
    kernel = _kernel_or_none("impact", design, fit.lag_columns, fit_kernel, fe_tol)
    return LagModelResult(fit=fit, cumulative=cumulative, kernel=kernel)

def chasing_frame(panel: MarketPanel) -> pd.DataFrame:
    """Fund-day rows with next-day relative flow as `flow_lead`."""
    view = panel.dense
    lead = np.full_like(view.flow_rel, np.nan)
    lead[:-1] = view.flow_rel[1:]
    frame = view.fund_frame({"flow_lead": lead, "flow": view.flow_rel, "ret": view.fund_return})
    frame["is_active"] = view.is_active[pd.Index(view.fund_ids).get_indexer(frame["fund_id"])]
    return frame

def estimate_chasing_kernel(
    panel: MarketPanel,
    *,
    lags: int = 200,
    flow_lags: int = 200,
    fit_kernel: bool = True,
    fe: Sequence[str] = ("date",),
    cluster: Sequence[str] = ("date", "fund_id"),
    fe_tol: float = FE_TOL,
) -> LagModelResult:
    """Next-day flows on L+1 lags of fund returns, time FE and lagged-flow controls."""
    frame = chasing_frame(panel)
    flow_cols: list[str] = []
    if flow_lags:
        frame = add_lags(frame, "flow", range(flow_lags), panel.calendar)
        flow_cols = [lag_name("flow", lag) for lag in range(flow_lags)]
    fit, design = distributed_lag(
        frame, "flow_lead", "ret", lags, panel.calendar,
        controls=flow_cols, fe=fe, cluster=cluster, entity="fund_id",
    )
    cumulative = cumulative_coefficients(fit)
    kernel = _kernel_or_none("chasing", design, fit.lag_columns, fit_kernel, fe_tol)
    return LagModelResult(fit=fit, cumulative=cumulative, kernel=kernel)
