from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd

from ..econometrics import variance_share
from ..errors import InputValidationError
from ..illiquidity import LiquidityMeasures
from ..impact import ImpactParams, ImpactSeries, impact_series
from ..model import DenseView, MarketPanel

def exp_weights(lambda_beta: float, L: int) -> np.ndarray:
    """w_s = exp(-lambda s) / sum_u exp(-lambda u), s = 0..L."""
    if lambda_beta < 0 or L < 0:
        raise InputValidationError(f"need lambda_beta >= 0 and L >= 0, got ({lambda_beta}, {L})")
    raw = np.exp(-lambda_beta * np.arange(L + 1, dtype=float))
    if not np.isfinite(raw).all() or raw.sum() == 0:
        raw = np.zeros(L + 1)
        raw[0] = 1.0
    return raw / raw.sum()

def weighted_history(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """out[t] = sum_s w_s values[t - s]; NaN unless the full window is observed."""
    n_dates = values.shape[0]
    out = np.zeros(values.shape)
    for s, w in enumerate(weights):
        shifted = np.full(values.shape, np.nan)
        if s < n_dates:
            shifted[s:] = values[: n_dates - s]
        out += w * shifted
    return out

@dataclass(frozen=True, eq=False)
class DecomposedReturns:
    view: DenseView
    params: ImpactParams
    lambda_beta: float
    L: int
    ret: np.ndarray
    ret_impact: np.ndarray
    ret_fund: np.ndarray
    ret_w: np.ndarray
    impact_w: np.ndarray
    fund_w: np.ndarray
    series: ImpactSeries

    def frame(self) -> pd.DataFrame:
        return self.view.fund_frame(
            {
                "ret": self.ret,
                "ret_impact": self.ret_impact,
                "ret_fund": self.ret_fund,
                "ret_w": self.ret_w,
                "impact_w": self.impact_w,
                "fund_w": self.fund_w,
            }
        )

def decompose(
    panel: MarketPanel,
    params: ImpactParams,
    lambda_beta: float = 0.01,
    L: int = 200,
    *,
    exposure: str = "current",
    measures: LiquidityMeasures | None = None,
    series: ImpactSeries | None = None,
) -> DecomposedReturns:
    """R = R^I + R^perp with R^I the total (all funds, reversal-inclusive) impact; plus weighted histories."""
    series = series or impact_series(panel, params, exposure=exposure, measures=measures)
    view = panel.dense
    ret = np.where(view.present, view.fund_return, np.nan)
    ret_impact = np.where(np.isfinite(ret), series.r_total, np.nan)
    ret_fund = ret - ret_impact
    weights = exp_weights(lambda_beta, L)
    return DecomposedReturns(
        view=view,
        params=params,
        lambda_beta=lambda_beta,
        L=L,
        ret=ret,
        ret_impact=ret_impact,
        ret_fund=ret_fund,
        ret_w=weighted_history(ret, weights),
        impact_w=weighted_history(ret_impact, weights),
        fund_w=weighted_history(ret_fund, weights),
        series=series,
    )

def cumulative_impact(decomposed: DecomposedReturns, fund_id: Any) -> tuple[pd.DataFrame, float]:
    """Cumulative fund return and cumulative self-inflated return for one fund, with their correlation."""
    view = decomposed.view
    hits = np.nonzero(view.fund_ids == fund_id)[0]
    if hits.size == 0:
        raise InputValidationError(f"unknown fund_id {fund_id!r}")
    i = int(hits[0])
    usable = np.isfinite(decomposed.ret[:, i]) & np.isfinite(decomposed.ret_impact[:, i])
    frame = pd.DataFrame(
        {
            "date": view.dates[usable],
            "fund_id": fund_id,
            "cum_ret": np.cumprod(1.0 + decomposed.ret[usable, i]) - 1.0,
            "cum_impact": np.cumsum(decomposed.ret_impact[usable, i]),
        }
    )
    if len(frame) < 3:
        return frame, float("nan")
    return frame, float(np.corrcoef(frame["cum_ret"], frame["cum_impact"])[0, 1])

def variance_shares(decomposed: DecomposedReturns, measures: LiquidityMeasures | None = None) -> pd.DataFrame:
    """Per-fund beta^I = cov(R^I, R) / var(R), with median size and concentration for cell assignment."""
    view = decomposed.view
    rows = []
    for i, fund_id in enumerate(view.fund_ids):
        paired = np.isfinite(decomposed.ret[:, i]) & np.isfinite(decomposed.ret_impact[:, i])
        row: dict[str, Any] = {
            "fund_id": fund_id,
            "n_obs": int(paired.sum()),
            "beta_impact": variance_share(decomposed.ret_impact[:, i], decomposed.ret[:, i]),
        }
        if measures is not None:
            row["fund_size"] = float(np.nanmedian(measures.fund_size[:, i])) if np.isfinite(measures.fund_size[:, i]).any() else np.nan
            row["fund_conc"] = float(np.nanmedian(measures.fund_conc[:, i])) if np.isfinite(measures.fund_conc[:, i]).any() else np.nan
        rows.append(row)
    return pd.DataFrame(rows)

def variance_share_cells(shares: pd.DataFrame) -> pd.DataFrame:
    """Mean beta^I per (size quintile x top-decile concentration) cell."""
    if not {"fund_size", "fund_conc"} <= set(shares.columns):
        raise InputValidationError("variance shares need fund_size and fund_conc; pass measures to variance_shares")
    data = shares.dropna(subset=["beta_impact", "fund_size", "fund_conc"]).copy()
    if data.empty:
        return pd.DataFrame(columns=["size_quintile", "conc_top_decile", "mean_beta_impact", "n_funds"])
    size_rank = data["fund_size"].rank(method="first")
    data["size_quintile"] = np.ceil(size_rank * 5 / len(data)).astype(int)
    conc_rank = data["fund_conc"].rank(method="first")
    data["conc_top_decile"] = conc_rank > np.floor(0.9 * len(data))
    cells = (
        data.groupby(["size_quintile", "conc_top_decile"])["beta_impact"]
        .agg(mean_beta_impact="mean", n_funds="count")
        .reset_index()
    )
    return cells.sort_values(["size_quintile", "conc_top_decile"], kind="mergesort").reset_index(drop=True)
