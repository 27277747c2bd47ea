from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .errors import InputValidationError
from .illiquidity import IlliquiditySettings, LiquidityMeasures, liquidity_measures
from .model import DenseView, MarketPanel
from .utils.io import read_csv_checked
from .utils.log import setup_logger

BASKET_COLUMNS = ("date", "fund_id", "security_id", "q_cu")

@dataclass(frozen=True)
class ImpactParams:
    theta: float = 0.78
    eta: float = 0.5
    decay: tuple[float, float, float] | None = None
    max_lag: int = 40

    def __post_init__(self) -> None:
        if self.theta < 0:
            raise InputValidationError(f"theta must be >= 0, got {self.theta}")
        if not 0.0 < self.eta <= 1.0:
            raise InputValidationError(f"eta must lie in (0, 1], got {self.eta}")
        if self.max_lag < 1:
            raise InputValidationError(f"max_lag must be >= 1, got {self.max_lag}")
        if self.decay is not None and self.decay[2] <= 0:
            raise InputValidationError(f"lambda_theta must be > 0, got {self.decay[2]}")

    @property
    def contemporaneous(self) -> float:
        return self.decay[0] if self.decay is not None else self.theta

def signed_power(x: Any, eta: float) -> Any:
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.abs(x) ** eta
    return out if out.ndim else float(out)

def price_impact(Q: Any, V: Any, sigma: Any, params: ImpactParams) -> Any:
    """sign(Q) theta sigma (|Q| / V)^eta."""
    V = np.asarray(V, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(V <= 0) or np.any(sigma <= 0):
        raise InputValidationError("price_impact needs V > 0 and sigma > 0")
    out = params.theta * sigma * signed_power(np.asarray(Q, dtype=float) / V, params.eta)
    return out if np.ndim(out) else float(out)

def self_inflated_return(f: Any, fund_illiq: Any, params: ImpactParams) -> Any:
    """theta sign(f) |f|^eta I_{t-1}; the illiquidity enters linearly."""
    out = params.theta * signed_power(f, params.eta) * np.asarray(fund_illiq, dtype=float)
    return out if np.ndim(out) else float(out)

def decay_kernel(params: ImpactParams) -> np.ndarray:
    """theta_0..theta_S; theta_s = theta1 exp(-lambda (s - 1)) for s >= 1. Without decay only theta_0."""
    if params.decay is None:
        return np.array([params.theta])
    theta0, theta1, lam = params.decay
    lags = np.arange(params.max_lag + 1, dtype=float)
    kernel = theta1 * np.exp(-lam * (lags - 1.0))
    kernel[0] = theta0
    return kernel

def long_run_impact(params: ImpactParams, horizon: int | None = None, formula: str = "discrete") -> float:
    """Cumulative kernel. `discrete` sums the geometric series (to `horizon` when given);
    `printed` is theta0 - theta1 / lambda."""
    if params.decay is None:
        return params.theta
    theta0, theta1, lam = params.decay
    if formula == "printed":
        return theta0 - theta1 / lam
    if formula != "discrete":
        raise InputValidationError(f"unknown long-run formula {formula!r}")
    if horizon is None:
        return theta0 + theta1 / (1.0 - np.exp(-lam))
    if horizon < 0:
        raise InputValidationError("horizon must be >= 0")
    return theta0 + theta1 * (1.0 - np.exp(-lam * horizon)) / (1.0 - np.exp(-lam))

def _measures(panel: MarketPanel, eta: float, measures: LiquidityMeasures | None) -> LiquidityMeasures:
    if measures is not None and measures.eta == eta:
        return measures
    return liquidity_measures(panel, IlliquiditySettings(eta=eta))

def cross_fund_illiquidity(
    i: Any,
    j: Any,
    date: Any,
    panel: MarketPanel,
    eta: float = 0.5,
    measures: LiquidityMeasures | None = None,
) -> float:
    """I_{ij} = sum_n w_{j,n} I_{i,n}: fund j's weights applied to fund i's position illiquidities."""
    measures = _measures(panel, eta, measures)
    view = panel.dense
    t = panel.date_position(date)
    fi, fj = _fund_position(view, i), _fund_position(view, j)
    if not (view.held[t, fi] and view.held[t, fj]):
        raise InputValidationError(f"funds {i} and {j} must both hold positions on {date}")
    return float(np.dot(view.weights[t, fj], np.nan_to_num(measures.pos_illiq_direct[t, fi])))

def _fund_position(view: DenseView, fund_id: Any) -> int:
    hits = np.nonzero(view.fund_ids == fund_id)[0]
    if hits.size == 0:
        raise InputValidationError(f"unknown fund_id {fund_id!r}")
    return int(hits[0])

def total_impact(
    fund_id: Any,
    date: Any,
    panel: MarketPanel,
    params: ImpactParams,
    exposure: str = "current",
    measures: LiquidityMeasures | None = None,
) -> float:
    """Sum over lags s and trading funds j of theta_s I_{t-1-s,ji} f^eta_{j,t-s}, lags truncated at the panel start."""
    measures = _measures(panel, params.eta, measures)
    view = panel.dense
    t = panel.date_position(date)
    i = _fund_position(view, fund_id)
    if t == 0 or not view.held[t - 1, i]:
        return float("nan")
    kernel = decay_kernel(params)
    fpow = np.nan_to_num(signed_power(view.flow_rel, params.eta))
    illiq = np.nan_to_num(measures.pos_illiq_direct)
    total = 0.0
    for s, theta_s in enumerate(kernel):
        if t - 1 - s < 0:
            break
        own = view.weights[t - 1, i] if exposure == "current" else view.weights[t - 1 - s, i]
        for j in range(view.fund_ids.size):
            cross = float(np.dot(own, illiq[t - 1 - s, j]))
            total += theta_s * cross * fpow[t - s, j]
    return total

@dataclass(frozen=True, eq=False)
class ImpactSeries:
    view: DenseView
    params: ImpactParams
    exposure: str
    r_self: np.ndarray
    r_total: np.ndarray
    pressure: np.ndarray

    def frame(self) -> pd.DataFrame:
        return self.view.fund_frame({"R_self": self.r_self, "R_total": self.r_total})

def flow_pressure(view: DenseView, pos_illiq: np.ndarray, eta: float) -> np.ndarray:
    """(T, N) signed impact units: sum_j f^eta_{j,t} I_{j,n,t-1}."""
    fpow = np.nan_to_num(signed_power(view.flow_rel, eta))
    illiq = np.nan_to_num(pos_illiq)
    pressure = np.zeros((view.dates.size, view.security_ids.size))
    if view.dates.size > 1:
        pressure[1:] = np.einsum("tj,tjn->tn", fpow[1:], illiq[:-1])
    return pressure

def impact_series(
    panel: MarketPanel,
    params: ImpactParams,
    exposure: str = "current",
    measures: LiquidityMeasures | None = None,
) -> ImpactSeries:
    """Own (R_self) and all-fund, reversal-inclusive (R_total) self-inflated returns for every fund-day."""
    if exposure not in ("current", "lagged"):
        raise InputValidationError(f"exposure must be 'current' or 'lagged', got {exposure!r}")
    measures = _measures(panel, params.eta, measures)
    view = panel.dense
    n_dates = view.dates.size
    kernel = decay_kernel(params)
    pressure = flow_pressure(view, measures.pos_illiq_direct, params.eta)
    prior_weights = np.zeros_like(view.weights)
    prior_weights[1:] = view.weights[:-1]

    if exposure == "current":
        convolved = np.zeros_like(pressure)
        for s, theta_s in enumerate(kernel):
            if s >= n_dates:
                break
            convolved[s:] += theta_s * pressure[: n_dates - s]
        r_total = np.einsum("tin,tn->ti", prior_weights, convolved)
    else:
        r_total = np.zeros((n_dates, view.fund_ids.size))
        for s, theta_s in enumerate(kernel):
            if s >= n_dates - 1:
                break
            # weights at t-1-s against pressure at t-s
            r_total[s + 1 :] += theta_s * np.einsum("tin,tn->ti", view.weights[: n_dates - 1 - s], pressure[1 : n_dates - s])

    illiq_lag = view.lagged(measures.fund_illiq_direct)
    r_self = self_inflated_return(view.flow_rel, illiq_lag, params)

    defined = view.present & view.lagged(view.held.astype(float), fill=0.0).astype(bool)
    r_total = np.where(defined, r_total, np.nan)
    r_self = np.where(defined, r_self, np.nan)
    return ImpactSeries(view=view, params=params, exposure=exposure, r_self=r_self, r_total=r_total, pressure=pressure)

def load_baskets(path: str | Path) -> pd.DataFrame:
    frame = read_csv_checked(path, BASKET_COLUMNS)
    frame["date"] = pd.to_datetime(frame["date"]).dt.normalize()
    frame["fund_id"] = frame["fund_id"].astype(str)
    frame["security_id"] = frame["security_id"].astype(str)
    return frame

def creation_baskets(
    panel: MarketPanel,
    override: pd.DataFrame | None = None,
    logger_name: str = "flowlab.impact",
) -> np.ndarray:
    """(T, I, N) dollars of each security per fund share: w A / S, or provider baskets where given."""
    view = panel.dense
    baskets = view.weights * np.nan_to_num(view.nav_price)[:, :, None]
    if override is None or override.empty:
        return baskets
    t_idx = view.dates.get_indexer(override["date"])
    i_idx = pd.Index(view.fund_ids).get_indexer(override["fund_id"])
    n_idx = pd.Index(view.security_ids).get_indexer(override["security_id"])
    known = (t_idx >= 0) & (i_idx >= 0) & (n_idx >= 0)
    if not known.all():
        setup_logger(logger_name).warning("basket_rows_ignored", extra={"n_rows": int((~known).sum())})
    t_idx, i_idx, n_idx = t_idx[known], i_idx[known], n_idx[known]
    baskets[t_idx, i_idx, :] = 0.0
    baskets[t_idx, i_idx, n_idx] = override["q_cu"].to_numpy(dtype=float)[known]
    return baskets

@dataclass(frozen=True, eq=False)
class AitSeries:
    view: DenseView
    ait: np.ndarray
    ait_hat: np.ndarray
    sqrt_ait: np.ndarray
    trade: np.ndarray

    def frame(self) -> pd.DataFrame:
        return self.view.security_frame(
            {"ait": self.ait, "ait_hat": self.ait_hat, "sqrt_ait": self.sqrt_ait},
            mask=np.isfinite(self.ait),
        )

def ait_series(panel: MarketPanel, baskets: np.ndarray | None = None) -> AitSeries:
    """AIT = sum_i dS_{i,t} q_{i,n,t-1} / M_{n,t-1};  AIT-hat = sign sigma sqrt(sum_i |dS| q / V)."""
    view = panel.dense
    if baskets is None:
        baskets = creation_baskets(panel)
    delta_shares = np.where(np.isfinite(view.flow_rel), view.fund_shares - view.lagged(view.fund_shares), 0.0)
    delta_shares = np.nan_to_num(delta_shares)
    prior_baskets = np.zeros_like(baskets)
    prior_baskets[1:] = baskets[:-1]
    trade = np.einsum("ti,tin->tn", delta_shares, prior_baskets)
    gross = np.einsum("ti,tin->tn", np.abs(delta_shares), prior_baskets)
    cap = view.lagged(view.market_cap)
    volume = view.lagged(view.dollar_volume)
    sigma = view.lagged(view.volatility)
    with np.errstate(divide="ignore", invalid="ignore"):
        ait = np.where(cap > 0, trade / cap, np.nan)
        ait_hat = np.where(volume > 0, np.sign(trade) * sigma * np.sqrt(gross / volume), np.nan)
    ait_hat = np.where(np.isfinite(ait), ait_hat, np.nan)
    ait = np.where(np.isfinite(ait_hat), ait, np.nan)
    sqrt_ait = np.sign(ait) * np.sqrt(np.abs(ait))
    return AitSeries(view=view, ait=ait, ait_hat=ait_hat, sqrt_ait=sqrt_ait, trade=trade)

def ait(security_id: Any, date: Any, panel: MarketPanel, baskets: np.ndarray | None = None) -> float:
    series = ait_series(panel, baskets)
    return float(series.ait[panel.date_position(date), _security_position(series.view, security_id)])

def ait_hat(security_id: Any, date: Any, panel: MarketPanel, baskets: np.ndarray | None = None) -> float:
    series = ait_series(panel, baskets)
    return float(series.ait_hat[panel.date_position(date), _security_position(series.view, security_id)])

def _security_position(view: DenseView, security_id: Any) -> int:
    hits = np.nonzero(view.security_ids == security_id)[0]
    if hits.size == 0:
        raise InputValidationError(f"unknown security_id {security_id!r}")
    return int(hits[0])
