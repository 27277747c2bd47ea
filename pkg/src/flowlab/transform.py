from __future__ import annotations

import logging
from typing import Any

import numpy as np
import pandas as pd

from .errors import InputValidationError
from .model import FUND_COLUMNS, HOLDING_COLUMNS, SECURITY_COLUMNS, MarketPanel
from .utils.log import setup_logger
from .utils.time import business_calendar

VOL_WINDOW = 60
VOL_MIN_OBS = 30
VOLUME_WINDOW = 20
VOLUME_MIN_OBS = 10
VOL_FLOOR = 1e-4
VOLUME_FLOOR_PCT = 1.0
FFILL_LIMIT = 5
WINSOR_MIN_FUNDS = 20

_TRUE = {"true", "1", "yes", "t", "y"}

def window_std(block: np.ndarray, min_obs: int = VOL_MIN_OBS) -> np.ndarray:
    """Column std (ddof=1) of a (k, N) block ignoring NaN; NaN below `min_obs` observations."""
    present = np.isfinite(block)
    count = present.sum(axis=0)
    filled = np.where(present, block, 0.0)
    mean = filled.sum(axis=0) / np.maximum(count, 1)
    dev = np.where(present, block - mean, 0.0)
    var = (dev * dev).sum(axis=0) / np.maximum(count - 1, 1)
    out = np.sqrt(var)
    out[count < min_obs] = np.nan
    return out

def window_mean(block: np.ndarray, min_obs: int = VOLUME_MIN_OBS) -> np.ndarray:
    present = np.isfinite(block)
    count = present.sum(axis=0)
    total = np.where(present, block, 0.0).sum(axis=0)
    out = total / np.maximum(count, 1)
    out[count < min_obs] = np.nan
    return out

def floor_liquidity(volume: np.ndarray, volatility: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-date floors: V at the cross-sectional 1st percentile, sigma at 1e-4; non-positive V becomes NaN."""
    volume = np.array(volume, dtype=float)
    volatility = np.array(volatility, dtype=float)
    finite = np.isfinite(volume)
    if finite.any():
        floor = np.percentile(volume[finite], VOLUME_FLOOR_PCT)
        volume[finite] = np.maximum(volume[finite], floor)
    volume[finite & (volume <= 0.0)] = np.nan
    ok = np.isfinite(volatility)
    volatility[ok] = np.maximum(volatility[ok], VOL_FLOOR)
    return volume, volatility

def trailing_liquidity_row(returns: np.ndarray, volume: np.ndarray, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Floored trailing (dollar_volume, volatility) at row t of (T, N) histories."""
    vol = window_std(returns[max(0, t - VOL_WINDOW + 1) : t + 1])
    dv = window_mean(volume[max(0, t - VOLUME_WINDOW + 1) : t + 1])
    return floor_liquidity(dv, vol)

def trailing_liquidity(returns: np.ndarray, volume: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dollar_volume = np.full(returns.shape, np.nan)
    volatility = np.full(returns.shape, np.nan)
    for t in range(returns.shape[0]):
        dollar_volume[t], volatility[t] = trailing_liquidity_row(returns, volume, t)
    return dollar_volume, volatility

def _as_bool(series: pd.Series) -> pd.Series:
    if series.dtype == bool:
        return series
    return series.astype(str).str.strip().str.lower().isin(_TRUE)

def _canonical(frame: pd.DataFrame, columns: tuple[str, ...], keys: list[str]) -> pd.DataFrame:
    out = frame.loc[:, [c for c in columns if c in frame.columns]].copy()
    out["date"] = pd.to_datetime(out["date"]).dt.normalize()
    for key in ("fund_id", "security_id"):
        if key in out.columns:
            out[key] = out[key].astype(str)
    return out.sort_values(keys, kind="mergesort").reset_index(drop=True)

def derive_security_fields(securities: pd.DataFrame, calendar: pd.DatetimeIndex) -> pd.DataFrame:
    """Add floored trailing dollar volume (20d) and return volatility (60d, min 30)."""
    out = securities.copy()
    ids = pd.Index(np.sort(out["security_id"].unique()))
    t_idx = calendar.get_indexer(out["date"])
    n_idx = ids.get_indexer(out["security_id"])
    returns = np.full((len(calendar), len(ids)), np.nan)
    volume = np.full_like(returns, np.nan)
    returns[t_idx, n_idx] = out["ret"].to_numpy(dtype=float)
    volume[t_idx, n_idx] = out["volume_usd"].to_numpy(dtype=float)
    dollar_volume, volatility = trailing_liquidity(returns, volume)
    out["dollar_volume"] = dollar_volume[t_idx, n_idx]
    out["volatility"] = volatility[t_idx, n_idx]
    return out

def _flow_columns(funds: pd.DataFrame, calendar: pd.DatetimeIndex) -> pd.DataFrame:
    out = funds.sort_values(["fund_id", "date"], kind="mergesort").reset_index(drop=True)
    position = calendar.get_indexer(out["date"])
    same_fund = out["fund_id"].eq(out["fund_id"].shift(1))
    consecutive = same_fund & (position - np.roll(position, 1) == 1)
    consecutive.iloc[:1] = False
    prev_nav = out["nav_price"].shift(1)
    prev_shares = out["shares_outstanding"].shift(1)
    prev_aum = prev_nav * prev_shares
    flow_dollar = (out["shares_outstanding"] - prev_shares) * prev_nav
    out["fund_return"] = np.where(consecutive, out["nav_price"] / prev_nav - 1.0, np.nan)
    out["flow_dollar"] = np.where(consecutive, flow_dollar, np.nan)
    out["flow_rel"] = np.where(consecutive, flow_dollar / prev_aum, np.nan)
    out["flow_present"] = consecutive.to_numpy()
    return out

def compute_flows(panel: MarketPanel) -> MarketPanel:
    """F_t = (S_t - S_{t-1}) P_{t-1} and f_t = F_t / A_{t-1}; absent (never zero) without a prior day."""
    funds = _flow_columns(panel.funds, panel.calendar)
    funds = funds.sort_values(["date", "fund_id"], kind="mergesort").reset_index(drop=True)
    return panel.replace(funds=funds)

def derive_fund_fields(funds: pd.DataFrame, calendar: pd.DatetimeIndex, logger: logging.Logger) -> pd.DataFrame:
    out = funds.copy()
    out["is_active"] = _as_bool(out["is_active"])
    bad_nav = ~(out["nav_price"] > 0)
    if bad_nav.any():
        logger.warning(
            "rows_rejected",
            extra={
                "table": "funds",
                "reason": "non_positive_nav_price",
                "n_rows": int(bad_nav.sum()),
                "sample": out.loc[bad_nav, ["date", "fund_id"]].head(3).astype(str).to_dict(orient="records"),
            },
        )
        out = out.loc[~bad_nav]
    out["aum"] = out["nav_price"] * out["shares_outstanding"]
    out = _flow_columns(out, calendar)
    return out.sort_values(["date", "fund_id"], kind="mergesort").reset_index(drop=True)

def derive_weights(
    holdings: pd.DataFrame,
    funds: pd.DataFrame,
    calendar: pd.DatetimeIndex,
    logger: logging.Logger,
) -> pd.DataFrame:
    """Normalize positions to weights and forward-fill gaps of up to five business days."""
    held = holdings.loc[holdings["dollar_position"] > 0].copy()
    totals = held.groupby(["fund_id", "date"])["dollar_position"].transform("sum")
    held["weight"] = held["dollar_position"] / totals
    held["filled"] = False

    reported = held[["fund_id", "date"]].drop_duplicates()
    fund_days = funds[["fund_id", "date", "aum"]]
    missing = fund_days.merge(reported, on=["fund_id", "date"], how="left", indicator=True)
    missing = missing.loc[missing["_merge"] == "left_only", ["fund_id", "date", "aum"]]

    filled = pd.DataFrame(columns=[*held.columns])
    if not missing.empty and not reported.empty:
        missing = missing.assign(pos=calendar.get_indexer(missing["date"])).sort_values("pos", kind="mergesort")
        source = reported.assign(source_pos=calendar.get_indexer(reported["date"]))
        source = source.rename(columns={"date": "source_date"}).sort_values("source_pos", kind="mergesort")
        matched = pd.merge_asof(
            missing,
            source,
            left_on="pos",
            right_on="source_pos",
            by="fund_id",
            direction="backward",
            allow_exact_matches=False,
        )
        matched = matched.loc[matched["source_pos"].notna() & (matched["pos"] - matched["source_pos"] <= FFILL_LIMIT)]
        if not matched.empty:
            template = held.rename(columns={"date": "source_date"})[["fund_id", "source_date", "security_id", "weight"]]
            filled = matched[["fund_id", "date", "source_date", "aum"]].merge(template, on=["fund_id", "source_date"])
            filled["dollar_position"] = filled["weight"] * filled["aum"]
            filled["filled"] = True
            filled = filled[held.columns.tolist()]
            logger.warning(
                "holdings_forward_filled",
                extra={"n_fund_days": int(len(matched)), "limit_days": FFILL_LIMIT},
            )
    out = pd.concat([held, filled], ignore_index=True) if len(filled) else held
    return out.sort_values(["date", "fund_id", "security_id"], kind="mergesort").reset_index(drop=True)

def build_panel(
    securities: pd.DataFrame,
    funds: pd.DataFrame,
    holdings: pd.DataFrame,
    calendar: pd.DatetimeIndex | None = None,
    logger_name: str = "flowlab.transform",
) -> MarketPanel:
    """Assemble a MarketPanel from raw tables; all derived fields are computed here."""
    logger = setup_logger(logger_name)
    securities = _canonical(securities, SECURITY_COLUMNS, ["date", "security_id"])
    funds = _canonical(funds, FUND_COLUMNS, ["date", "fund_id"])
    holdings = _canonical(holdings, HOLDING_COLUMNS, ["date", "fund_id", "security_id"])
    if calendar is None:
        calendar = business_calendar(pd.concat([securities["date"], funds["date"]]))
    calendar = business_calendar(calendar)

    securities = derive_security_fields(securities, calendar)
    funds = derive_fund_fields(funds, calendar, logger)
    holdings = holdings.merge(funds[["fund_id", "date"]], on=["fund_id", "date"], how="inner")
    holdings = derive_weights(holdings, funds, calendar, logger)

    logger.info(
        "panel_built",
        extra={
            "n_dates": int(len(calendar)),
            "n_funds": int(funds["fund_id"].nunique()),
            "n_securities": int(securities["security_id"].nunique()),
            "n_holdings": int(len(holdings)),
        },
    )
    return MarketPanel(calendar=calendar, securities=securities, funds=funds, holdings=holdings)

def winsorize_flows(
    panel: MarketPanel,
    lower_pct: float,
    upper_pct: float,
    logger_name: str = "flowlab.transform",
) -> MarketPanel:
    """Clamp flow_rel to per-date cross-sectional quantiles; originals kept in `flow_rel_raw`."""
    if not 0.0 <= lower_pct < upper_pct <= 1.0:
        raise InputValidationError(f"need 0 <= lower < upper <= 1, got ({lower_pct}, {upper_pct})")
    logger = setup_logger(logger_name)
    funds = panel.funds.copy()
    raw = funds["flow_rel_raw"] if "flow_rel_raw" in funds.columns else funds["flow_rel"]
    funds["flow_rel_raw"] = raw
    clipped = raw.copy()
    skipped: list[str] = []
    for date, index in funds.loc[funds["flow_present"] & raw.notna()].groupby("date").groups.items():
        values = raw.loc[index].to_numpy(dtype=float)
        if len(values) < WINSOR_MIN_FUNDS:
            skipped.append(pd.Timestamp(date).strftime("%Y-%m-%d"))
            continue
        low, high = np.quantile(values, [lower_pct, upper_pct])
        clipped.loc[index] = np.clip(values, low, high)
    if skipped:
        logger.warning(
            "winsorize_skipped",
            extra={"n_dates": len(skipped), "min_funds": WINSOR_MIN_FUNDS, "sample": skipped[:3]},
        )
    funds["flow_rel"] = clipped
    return panel.replace(funds=funds)

def flow_driven_trade(fund_id: Any, security_id: Any, date: Any, panel: MarketPanel) -> float | None:
    """Q = w_{t-1} F_t; None when the fund did not hold the security the prior day or the flow is absent."""
    t = panel.date_position(date)
    if t == 0:
        return None
    previous = panel.calendar[t - 1]
    row = panel.locate(fund_id, previous, security_id)
    if row is None:
        return None
    fund = panel.funds.loc[(panel.funds["fund_id"] == fund_id) & (panel.funds["date"] == panel.calendar[t])]
    if fund.empty or not bool(fund["flow_present"].iloc[0]):
        return None
    return float(panel.holdings["weight"].iloc[row] * fund["flow_dollar"].iloc[0])

def flow_driven_trades(panel: MarketPanel) -> pd.DataFrame:
    """All Q_{i,n,t} = w_{i,n,t-1} F_{i,t} in long form."""
    view = panel.dense
    prior_weights = np.zeros_like(view.weights)
    prior_weights[1:] = view.weights[:-1]
    trades = prior_weights * np.nan_to_num(view.flow_dollar)[:, :, None]
    mask = (prior_weights > 0) & np.isfinite(view.flow_dollar)[:, :, None]
    t_idx, i_idx, n_idx = np.nonzero(mask)
    return pd.DataFrame(
        {
            "date": view.dates[t_idx],
            "fund_id": view.fund_ids[i_idx],
            "security_id": view.security_ids[n_idx],
            "q": trades[t_idx, i_idx, n_idx],
        }
    )

def apply_sample_filters(
    panel: MarketPanel,
    sample: str = "all",
    min_aum: float = 0.0,
    top_liquidity_n: int = 0,
    logger_name: str = "flowlab.transform",
) -> MarketPanel:
    """Restrict funds (active/passive, median AUM) and the security universe (top-N by median dollar volume)."""
    logger = setup_logger(logger_name)
    funds = panel.funds
    keep = pd.Series(True, index=funds.index)
    if sample != "all":
        active = funds.groupby("fund_id")["is_active"].transform("last").astype(bool)
        keep &= active if sample == "active" else ~active
    if min_aum > 0:
        keep &= funds.groupby("fund_id")["aum"].transform("median") >= min_aum
    funds = funds.loc[keep]
    holdings = panel.holdings.loc[panel.holdings["fund_id"].isin(funds["fund_id"].unique())]
    securities = panel.securities
    if top_liquidity_n > 0:
        liquidity = securities.groupby("security_id")["volume_usd"].median().sort_index()
        ranked = liquidity.sort_values(ascending=False, kind="mergesort")
        universe = set(ranked.index[:top_liquidity_n])
        securities = securities.loc[securities["security_id"].isin(universe)]
        holdings = holdings.loc[holdings["security_id"].isin(universe)].copy()
        totals = holdings.groupby(["fund_id", "date"])["weight"].transform("sum")
        holdings["weight"] = holdings["weight"] / totals
        aum = holdings.merge(funds[["fund_id", "date", "aum"]], on=["fund_id", "date"], how="left")["aum"]
        holdings["dollar_position"] = holdings["weight"].to_numpy() * aum.to_numpy()
    dropped = int(panel.funds["fund_id"].nunique() - funds["fund_id"].nunique())
    logger.info(
        "sample_filtered",
        extra={"sample": sample, "min_aum": min_aum, "top_liquidity_n": top_liquidity_n, "funds_dropped": dropped},
    )
    return MarketPanel(
        calendar=panel.calendar,
        securities=securities.reset_index(drop=True),
        funds=funds.reset_index(drop=True),
        holdings=holdings.reset_index(drop=True),
    )
