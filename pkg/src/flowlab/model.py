from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any

import numpy as np
import pandas as pd

SECURITY_COLUMNS = ("date", "security_id", "ret", "close", "volume_usd", "market_cap", "shares_outstanding")
FUND_COLUMNS = ("date", "fund_id", "nav_price", "shares_outstanding", "is_active")
HOLDING_COLUMNS = ("date", "fund_id", "security_id", "dollar_position")

@dataclass(frozen=True, eq=False)
class DenseView:
    """(date x fund x security) arrays aligned on sorted ids; NaN marks absence."""

    dates: pd.DatetimeIndex
    fund_ids: np.ndarray
    security_ids: np.ndarray
    present: np.ndarray
    held: np.ndarray
    weights: np.ndarray
    aum: np.ndarray
    nav_price: np.ndarray
    fund_shares: np.ndarray
    fund_return: np.ndarray
    flow_dollar: np.ndarray
    flow_rel: np.ndarray
    is_active: np.ndarray
    ret: np.ndarray
    volatility: np.ndarray
    dollar_volume: np.ndarray
    market_cap: np.ndarray
    security_shares: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.weights.shape

    def lagged(self, values: np.ndarray, lag: int = 1, fill: float = np.nan) -> np.ndarray:
        """Shift along the date axis so row t holds the value of t - lag."""
        out = np.full_like(values, fill, dtype=float)
        if lag < values.shape[0]:
            out[lag:] = values[: values.shape[0] - lag]
        return out

    def fund_frame(self, columns: dict[str, np.ndarray], mask: np.ndarray | None = None) -> pd.DataFrame:
        """Long (date, fund_id) frame over present fund-days (or `mask`), sorted by date then fund."""
        keep = self.present if mask is None else mask
        t_idx, i_idx = np.nonzero(keep)
        frame = pd.DataFrame({"date": self.dates[t_idx], "fund_id": self.fund_ids[i_idx]})
        for name, values in columns.items():
            frame[name] = values[t_idx, i_idx]
        return frame

    def security_frame(self, columns: dict[str, np.ndarray], mask: np.ndarray | None = None) -> pd.DataFrame:
        keep = np.isfinite(self.ret) if mask is None else mask
        t_idx, n_idx = np.nonzero(keep)
        frame = pd.DataFrame({"date": self.dates[t_idx], "security_id": self.security_ids[n_idx]})
        for name, values in columns.items():
            frame[name] = values[t_idx, n_idx]
        return frame

@dataclass(frozen=True, eq=False)
class MarketPanel:
    calendar: pd.DatetimeIndex
    securities: pd.DataFrame
    funds: pd.DataFrame
    holdings: pd.DataFrame

    @property
    def fund_ids(self) -> np.ndarray:
        return np.sort(self.funds["fund_id"].unique())

    @property
    def security_ids(self) -> np.ndarray:
        return np.sort(self.securities["security_id"].unique())

    def replace(self, **changes: Any) -> "MarketPanel":
        return replace(self, **changes)

    @cached_property
    def holdings_index(self) -> pd.Series:
        """(fund_id, date, security_id) -> row position in `holdings`."""
        keys = pd.MultiIndex.from_frame(self.holdings[["fund_id", "date", "security_id"]])
        return pd.Series(np.arange(len(self.holdings)), index=keys)

    def locate(self, fund_id: Any, date: Any, security_id: Any) -> int | None:
        try:
            return int(self.holdings_index.loc[(fund_id, pd.Timestamp(date), security_id)])
        except KeyError:
            return None

    def date_position(self, date: Any) -> int:
        position = self.calendar.get_indexer([pd.Timestamp(date)])[0]
        if position < 0:
            raise KeyError(f"date {date} is not on the panel calendar")
        return int(position)

    @cached_property
    def dense(self) -> DenseView:
        return _build_dense(self)

def _build_dense(panel: MarketPanel) -> DenseView:
    dates = panel.calendar
    fund_ids = panel.fund_ids
    security_ids = panel.security_ids
    n_dates, n_funds, n_secs = len(dates), len(fund_ids), len(security_ids)
    fund_pos = pd.Index(fund_ids)
    sec_pos = pd.Index(security_ids)

    funds = panel.funds
    ft = dates.get_indexer(funds["date"])
    fi = fund_pos.get_indexer(funds["fund_id"])

    def fund_array(column: str) -> np.ndarray:
        out = np.full((n_dates, n_funds), np.nan)
        out[ft, fi] = funds[column].to_numpy(dtype=float)
        return out

    present = np.zeros((n_dates, n_funds), dtype=bool)
    present[ft, fi] = True
    flow_rel = fund_array("flow_rel")
    flow_dollar = fund_array("flow_dollar")
    absent_flow = ~funds["flow_present"].to_numpy(dtype=bool)
    flow_rel[ft[absent_flow], fi[absent_flow]] = np.nan
    flow_dollar[ft[absent_flow], fi[absent_flow]] = np.nan

    active = (
        funds.sort_values("date").groupby("fund_id")["is_active"].last().reindex(fund_ids).fillna(False).to_numpy(dtype=bool)
    )

    secs = panel.securities
    st = dates.get_indexer(secs["date"])
    sn = sec_pos.get_indexer(secs["security_id"])

    def security_array(column: str) -> np.ndarray:
        out = np.full((n_dates, n_secs), np.nan)
        out[st, sn] = secs[column].to_numpy(dtype=float)
        return out

    holdings = panel.holdings
    ht = dates.get_indexer(holdings["date"])
    hi = fund_pos.get_indexer(holdings["fund_id"])
    hn = sec_pos.get_indexer(holdings["security_id"])
    weights = np.zeros((n_dates, n_funds, n_secs))
    weights[ht, hi, hn] = holdings["weight"].to_numpy(dtype=float)
    held = np.zeros((n_dates, n_funds), dtype=bool)
    held[ht, hi] = True

    return DenseView(
        dates=dates,
        fund_ids=fund_ids,
        security_ids=security_ids,
        present=present,
        held=held,
        weights=weights,
        aum=fund_array("aum"),
        nav_price=fund_array("nav_price"),
        fund_shares=fund_array("shares_outstanding"),
        fund_return=fund_array("fund_return"),
        flow_dollar=flow_dollar,
        flow_rel=flow_rel,
        is_active=active,
        ret=security_array("ret"),
        volatility=security_array("volatility"),
        dollar_volume=security_array("dollar_volume"),
        market_cap=security_array("market_cap"),
        security_shares=security_array("shares_outstanding"),
    )

def market_return(panel: MarketPanel) -> pd.Series:
    """AUM-weighted (prior-day AUM) mean fund return per date; NaN when no fund qualifies."""
    view = panel.dense
    return pd.Series(market_return_array(view), index=view.dates, name="market_return")

def market_return_array(view: DenseView) -> np.ndarray:
    prior_aum = view.lagged(view.aum)
    usable = np.isfinite(prior_aum) & np.isfinite(view.fund_return) & (prior_aum > 0)
    weight = np.where(usable, prior_aum, 0.0)
    total = weight.sum(axis=1)
    weighted = np.where(usable, view.fund_return, 0.0) * weight
    out = np.full(view.dates.size, np.nan)
    np.divide(weighted.sum(axis=1), total, out=out, where=total > 0)
    return out
