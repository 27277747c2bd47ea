from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from ..errors import InputValidationError
from ..illiquidity import LiquidityMeasures
from ..model import MarketPanel, market_return_array
from ..utils.log import setup_logger

MIN_FUNDS = 10
N_DECILES = 10
SORT_KEYS = ("flow", "flow_liquidity")

@dataclass(frozen=True, eq=False)
class SortResult:
    table: pd.DataFrame
    stats: pd.DataFrame
    n_dates: int
    n_skipped: int

def stable_ranks(keys: np.ndarray, order_key: np.ndarray) -> np.ndarray:
    """0-based ranks of `keys`, ties broken by `order_key` (integer position in the sorted fund ids)."""
    order = np.lexsort((order_key, keys))
    ranks = np.empty(keys.size, dtype=int)
    ranks[order] = np.arange(keys.size)
    return ranks

def _fund_betas(fund_return: np.ndarray, market: np.ndarray) -> np.ndarray:
    betas = np.full(fund_return.shape[1], np.nan)
    for i in range(fund_return.shape[1]):
        ok = np.isfinite(fund_return[:, i]) & np.isfinite(market)
        if ok.sum() < 3 or np.var(market[ok]) == 0:
            continue
        betas[i] = np.cov(fund_return[ok, i], market[ok], ddof=1)[0, 1] / np.var(market[ok], ddof=1)
    return betas

def flow_decile_sort(
    panel: MarketPanel,
    measures: LiquidityMeasures,
    illiq_split: float = 0.9,
    sort_key: str = "flow",
    logger_name: str = "flowlab.analytics",
) -> SortResult:
    """Mean raw, excess and market-adjusted returns per (flow decile x illiquidity group).

    Deciles use all funds of the date; the illiquid group is the top (1 - illiq_split) by prior-day
    illiquidity (by concentration for the flow-to-liquidity key).
    """
    if sort_key not in SORT_KEYS:
        raise InputValidationError(f"sort_key must be one of {SORT_KEYS}, got {sort_key!r}")
    if not 0.0 < illiq_split < 1.0:
        raise InputValidationError(f"illiq_split must lie in (0, 1), got {illiq_split}")
    logger = setup_logger(logger_name)
    view = panel.dense
    market = market_return_array(view)
    betas = _fund_betas(view.fund_return, market)
    if sort_key == "flow":
        key = view.flow_rel
        split_on = view.lagged(measures.fund_illiq_direct)
    else:
        key = view.flow_dollar / view.lagged(measures.fund_eff_liq)
        split_on = view.lagged(measures.fund_conc)

    records = []
    skipped = 0
    for t in range(view.dates.size):
        ok = np.isfinite(key[t]) & np.isfinite(view.fund_return[t]) & np.isfinite(split_on[t]) & np.isfinite(market[t])
        members = np.nonzero(ok)[0]
        if members.size < MIN_FUNDS:
            skipped += int(members.size > 0)
            continue
        ids = view.fund_ids[members]
        decile = stable_ranks(key[t, members], members) * N_DECILES // members.size
        illiquid = stable_ranks(split_on[t, members], members) >= int(np.floor(illiq_split * members.size))
        raw = view.fund_return[t, members]
        records.append(
            pd.DataFrame(
                {
                    "date": view.dates[t],
                    "fund_id": ids,
                    "decile": decile + 1,
                    "group": np.where(illiquid, "illiquid", "liquid"),
                    "raw": raw,
                    "excess": raw - market[t],
                    "abnormal": raw - betas[members] * market[t],
                }
            )
        )
    if skipped:
        logger.warning("sort_dates_skipped", extra={"n_dates": skipped, "min_funds": MIN_FUNDS})
    if not records:
        empty = pd.DataFrame(columns=["group", "decile", "raw", "excess", "abnormal", "n_obs"])
        return SortResult(empty, pd.DataFrame(columns=["group", "rank_corr", "spread_mean", "spread_t", "n_dates"]), 0, skipped)
    assigned = pd.concat(records, ignore_index=True)

    daily = assigned.groupby(["date", "group", "decile"])[["raw", "excess", "abnormal"]].mean().reset_index()
    table = daily.groupby(["group", "decile"])[["raw", "excess", "abnormal"]].mean()
    table["n_obs"] = assigned.groupby(["group", "decile"]).size()
    table = table.reset_index().sort_values(["group", "decile"], kind="mergesort").reset_index(drop=True)

    rows = []
    for group, cells in table.groupby("group"):
        corr = stats.spearmanr(cells["decile"], cells["raw"])[0] if len(cells) > 2 else np.nan
        wide = daily.loc[daily["group"] == group].pivot(index="date", columns="decile", values="raw")
        spread = (wide.get(N_DECILES) - wide.get(1)).dropna() if {1, N_DECILES} <= set(wide.columns) else pd.Series(dtype=float)
        if len(spread) > 1 and spread.std(ddof=1) > 0:
            t_stat = float(spread.mean() / (spread.std(ddof=1) / np.sqrt(len(spread))))
        else:
            t_stat = np.nan
        rows.append(
            {
                "group": group,
                "rank_corr": float(corr),
                "spread_mean": float(spread.mean()) if len(spread) else np.nan,
                "spread_t": t_stat,
                "n_dates": int(len(spread)),
            }
        )
    return SortResult(table=table, stats=pd.DataFrame(rows), n_dates=int(assigned["date"].nunique()), n_skipped=skipped)
