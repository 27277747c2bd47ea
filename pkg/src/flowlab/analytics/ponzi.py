from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
import pandas as pd

from ..errors import InputValidationError
from ..impact import ImpactParams, signed_power
from ..model import DenseView
from ..utils.log import setup_logger
from .decompose import DecomposedReturns

SUBSETS = ("all", "top_illiq", "rest")
TOP_ILLIQ_SHARE = 0.10
ROLLING_DAYS = 21

def ponzi_flows(decomposed: DecomposedReturns, beta1: float | Mapping[str, float]) -> np.ndarray:
    """f^P_{t+1} = beta1 * weighted R^I_t; `beta1` may map 'active'/'passive' to split estimates."""
    view = decomposed.view
    if isinstance(beta1, Mapping):
        missing = {"active", "passive"} - set(beta1)
        if missing:
            raise InputValidationError(f"split beta1 needs keys {sorted(missing)}")
        coef = np.where(view.is_active, beta1["active"], beta1["passive"])[None, :]
    else:
        coef = np.full((1, view.fund_ids.size), float(beta1))
    flows = np.full(decomposed.impact_w.shape, np.nan)
    flows[1:] = coef * decomposed.impact_w[:-1]
    return flows

def ponzi_returns(ponzi_flow: np.ndarray, illiq_lag: np.ndarray, params: ImpactParams, theta: float | None = None) -> np.ndarray:
    """R^P_t = theta I_{t-1} sign(f^P_t) |f^P_t|^eta."""
    scale = params.theta if theta is None else theta
    return scale * np.asarray(illiq_lag, dtype=float) * signed_power(ponzi_flow, params.eta)

@dataclass(frozen=True, eq=False)
class PonziSeries:
    view: DenseView
    ponzi_flow: np.ndarray
    ponzi_return: np.ndarray
    flow: np.ndarray
    aum_lag: np.ndarray
    top_illiq: np.ndarray

    def _date(self, date: Any) -> int:
        position = self.view.dates.get_indexer([pd.Timestamp(date)])[0]
        if position < 0:
            raise InputValidationError(f"date {date} is not on the panel calendar")
        return int(position)

    def _subset(self, t: int, subset: str) -> np.ndarray:
        if subset == "all":
            return np.ones(self.view.fund_ids.size, dtype=bool)
        if subset == "top_illiq":
            return self.top_illiq[t]
        if subset == "rest":
            return ~self.top_illiq[t]
        raise InputValidationError(f"subset must be one of {SUBSETS}, got {subset!r}")

    def volume_ratio_at(self, t: int, subset: str = "all") -> float:
        members = self._subset(t, subset)
        usable = members & np.isfinite(self.ponzi_flow[t]) & np.isfinite(self.flow[t]) & np.isfinite(self.aum_lag[t])
        denominator = float(np.sum(np.abs(self.flow[t, usable]) * self.aum_lag[t, usable]))
        if denominator == 0.0:
            return float("nan")
        return float(np.sum(np.abs(self.ponzi_flow[t, usable]) * self.aum_lag[t, usable]) / denominator)

    def reallocation_at(self, t: int) -> float:
        usable = np.isfinite(self.ponzi_return[t]) & np.isfinite(self.aum_lag[t])
        return float(np.sum(np.abs(self.ponzi_return[t, usable]) * self.aum_lag[t, usable]))

    def fund_frame(self) -> pd.DataFrame:
        return self.view.fund_frame({"ponzi_flow": self.ponzi_flow, "ponzi_return": self.ponzi_return})

    def daily_frame(self) -> pd.DataFrame:
        n_dates = self.view.dates.size
        frame = pd.DataFrame({"date": self.view.dates})
        for subset in SUBSETS:
            frame[f"ratio_{subset}"] = [self.volume_ratio_at(t, subset) for t in range(n_dates)]
            frame[f"ratio_{subset}_roll{ROLLING_DAYS}"] = (
                frame[f"ratio_{subset}"].rolling(ROLLING_DAYS, min_periods=ROLLING_DAYS // 2 + 1).mean()
            )
            # Ponzi flow volume larger than total flow volume
            frame[f"ratio_{subset}_above_one"] = frame[f"ratio_{subset}"] > 1.0
        frame["reallocation"] = [self.reallocation_at(t) for t in range(n_dates)]
        frame["cum_reallocation"] = frame["reallocation"].cumsum()
        return frame

def ponzi_volume_ratio(series: PonziSeries, date: Any, subset: str = "all") -> float:
    """sum |f^P| A_{t-1} / sum |f| A_{t-1} on the flow date; NaN when there is no flow volume."""
    return series.volume_ratio_at(series._date(date), subset)

def wealth_reallocation(series: PonziSeries, date: Any) -> float:
    """sum |R^P| A_{t-1} in USD."""
    return series.reallocation_at(series._date(date))

def top_illiquid_mask(illiq_lag: np.ndarray, share: float = TOP_ILLIQ_SHARE) -> np.ndarray:
    """Per date, funds in the top `share` of prior-day illiquidity (at least one when any is finite)."""
    mask = np.zeros(illiq_lag.shape, dtype=bool)
    for t in range(illiq_lag.shape[0]):
        finite = np.nonzero(np.isfinite(illiq_lag[t]))[0]
        if finite.size == 0:
            continue
        n_top = max(1, int(np.ceil(share * finite.size)))
        order = finite[np.argsort(-illiq_lag[t, finite], kind="mergesort")]
        mask[t, order[:n_top]] = True
    return mask

def ponzi_series(
    decomposed: DecomposedReturns,
    beta1: float | Mapping[str, float],
    illiq: np.ndarray,
    params: ImpactParams,
    *,
    theta: float | None = None,
    logger_name: str = "flowlab.analytics",
) -> PonziSeries:
    """Ponzi flows, Ponzi returns and per-date aggregates. `illiq` is the (T, I) fund illiquidity."""
    view = decomposed.view
    illiq_lag = view.lagged(illiq)
    flows = ponzi_flows(decomposed, beta1)
    series = PonziSeries(
        view=view,
        ponzi_flow=flows,
        ponzi_return=ponzi_returns(flows, illiq_lag, params, theta),
        flow=view.flow_rel,
        aum_lag=view.lagged(view.aum),
        top_illiq=top_illiquid_mask(illiq_lag),
    )
    ratios = np.array([series.volume_ratio_at(t) for t in range(view.dates.size)])
    above = int(np.sum(ratios > 1.0))
    if above:
        setup_logger(logger_name).warning("ponzi_ratio_above_one", extra={"n_dates": above, "max_ratio": float(np.nanmax(ratios))})
    return series
