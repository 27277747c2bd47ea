from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
import pandas as pd

from .errors import InputValidationError
from .model import DenseView, MarketPanel
from .utils.log import setup_logger

def effective_liquidity(V: Any, sigma: Any, eta: float) -> Any:
    """V~ = V * sigma^(-1/eta)."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise InputValidationError("sigma must be > 0; apply the volatility floor upstream")
    _check_eta(eta)
    out = np.asarray(V, dtype=float) * sigma ** (-1.0 / eta)
    return out if out.ndim else float(out)

def position_illiquidity(w: Any, A: Any, V: Any, sigma: Any, eta: float) -> Any:
    """I_n = sigma * (w A / V)^eta, the dollar position relative to liquidity."""
    V = np.asarray(V, dtype=float)
    if np.any(V <= 0):
        raise InputValidationError("V must be > 0; apply the liquidity floor upstream")
    _check_eta(eta)
    out = np.asarray(sigma, dtype=float) * (np.asarray(w, dtype=float) * np.asarray(A, dtype=float) / V) ** eta
    return out if out.ndim else float(out)

def position_concentration(w: Any, v: Any, eta: float) -> Any:
    """C_n = (w / v)^eta with v the security's share of the fund's effective liquidity."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise InputValidationError("liquidity share v must be > 0 for held securities")
    out = (np.asarray(w, dtype=float) / v) ** eta
    return out if out.ndim else float(out)

def fund_size(A: float, sum_eff_liq: float) -> float:
    """S = A / sum of effective liquidity over the fund's universe."""
    if sum_eff_liq <= 0:
        raise InputValidationError("sum of effective liquidity must be > 0")
    return float(A / sum_eff_liq)

def _check_eta(eta: float) -> None:
    if not 0.0 < eta <= 1.0:
        raise InputValidationError(f"eta must lie in (0, 1], got {eta}")

@dataclass(frozen=True)
class IlliquiditySettings:
    eta: float = 0.5
    supply: str = "volume"
    vol_prefactor: bool = True
    aggregation: str = "linear"

    @staticmethod
    def legacy() -> "IlliquiditySettings":
        """Low-frequency variant: eta = 1, market-cap supply, no volatility prefactor."""
        return IlliquiditySettings(eta=1.0, supply="market_cap", vol_prefactor=False)

@dataclass(frozen=True, eq=False)
class LiquidityMeasures:
    """Dense (T, I[, N]) measures; NaN marks fund-days without usable liquidity data."""

    view: DenseView
    settings: IlliquiditySettings
    pos_illiq: np.ndarray
    pos_conc: np.ndarray
    pos_illiq_direct: np.ndarray
    fund_illiq: np.ndarray
    fund_conc: np.ndarray
    fund_size: np.ndarray
    fund_illiq_direct: np.ndarray
    fund_eff_liq: np.ndarray

    @property
    def eta(self) -> float:
        return self.settings.eta

    def funds_frame(self) -> pd.DataFrame:
        frame = self.view.fund_frame(
            {
                "fund_illiq": self.fund_illiq,
                "fund_conc": self.fund_conc,
                "fund_size": self.fund_size,
                "fund_illiq_direct": self.fund_illiq_direct,
                "fund_eff_liq": self.fund_eff_liq,
            },
            mask=self.view.held,
        )
        frame["illiq_gap"] = frame["fund_illiq_direct"] - frame["fund_illiq"]
        frame["eta"] = self.eta
        return frame

    def positions_frame(self) -> pd.DataFrame:
        t_idx, i_idx, n_idx = np.nonzero(self.view.weights > 0)
        return pd.DataFrame(
            {
                "date": self.view.dates[t_idx],
                "fund_id": self.view.fund_ids[i_idx],
                "security_id": self.view.security_ids[n_idx],
                "weight": self.view.weights[t_idx, i_idx, n_idx],
                "pos_illiq": self.pos_illiq[t_idx, i_idx, n_idx],
                "pos_conc": self.pos_conc[t_idx, i_idx, n_idx],
                "pos_illiq_direct": self.pos_illiq_direct[t_idx, i_idx, n_idx],
            }
        )

def _supply(view: DenseView, settings: IlliquiditySettings) -> tuple[np.ndarray, np.ndarray]:
    supply = view.dollar_volume if settings.supply == "volume" else view.market_cap
    prefactor = view.volatility if settings.vol_prefactor else np.ones_like(view.volatility)
    return supply, prefactor

def direct_position_illiquidity(
    weights: np.ndarray,
    aum: np.ndarray,
    supply: np.ndarray,
    prefactor: np.ndarray,
    eta: float,
) -> np.ndarray:
    """sigma (w A / V)^eta over (..., I, N) weights; zero where not held, NaN where liquidity is missing."""
    held = weights > 0
    ratio = np.zeros_like(weights)
    scale = aum[..., None] / supply[..., None, :]
    np.multiply(weights, scale, out=ratio, where=held)
    out = np.zeros_like(weights)
    np.power(ratio, eta, out=out, where=held)
    np.multiply(out, np.broadcast_to(prefactor[..., None, :], weights.shape), out=out, where=held)
    out[held & ~np.isfinite(out)] = np.nan
    return out

def liquidity_measures(
    panel: MarketPanel,
    settings: IlliquiditySettings | None = None,
    logger_name: str = "flowlab.illiquidity",
) -> LiquidityMeasures:
    """Position and fund measures for every held fund-day.

    The reported 𝓘 uses the C x S route so fund_illiq = fund_conc * fund_size exactly;
    the sigma (w A / V)^eta route is carried alongside as `*_direct`.
    """
    settings = settings or IlliquiditySettings()
    _check_eta(settings.eta)
    logger = setup_logger(logger_name)
    view = panel.dense
    eta = settings.eta
    weights = view.weights
    held = weights > 0
    supply, prefactor = _supply(view, settings)

    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if settings.vol_prefactor:
            eff = supply * np.where(prefactor > 0, prefactor, np.nan) ** (-1.0 / eta)
        else:
            eff = supply.astype(float)
        eff = np.where(eff > 0, eff, np.nan)
        eff_held = np.where(held, eff[:, None, :], 0.0)
        bad = (held & ~np.isfinite(eff_held)).any(axis=2) | (held & ~np.isfinite(prefactor)[:, None, :]).any(axis=2)
        eff_held = np.where(np.isfinite(eff_held), eff_held, 0.0)
        sum_eff = eff_held.sum(axis=2)
        share = np.zeros_like(weights)
        np.divide(eff_held, sum_eff[:, :, None], out=share, where=held & (sum_eff[:, :, None] > 0))

        conc = np.zeros_like(weights)
        np.power(weights / np.where(held, share, 1.0), eta, out=conc, where=held)
        size = view.aum / sum_eff
        illiq = conc * size[:, :, None]

        direct = direct_position_illiquidity(weights, view.aum, supply, prefactor, eta)

        fund_conc = (weights * conc).sum(axis=2)
        if settings.aggregation == "outer_power":
            fund_illiq = ((weights * np.nan_to_num(direct)).sum(axis=2)) ** (1.0 / eta)
        else:
            fund_illiq = (weights * illiq).sum(axis=2)
        fund_direct = (weights * np.nan_to_num(direct)).sum(axis=2)

    bad |= ~np.isfinite(view.aum) & view.held
    absent = ~view.held | bad
    for array in (fund_conc, fund_illiq, fund_direct, size, sum_eff):
        array[absent] = np.nan
    pos_absent = np.broadcast_to(absent[:, :, None], weights.shape)
    for array in (conc, illiq, direct):
        array[pos_absent] = np.nan

    n_bad = int((bad & view.held).sum())
    if n_bad:
        t_idx, i_idx = np.nonzero(bad & view.held)
        logger.warning(
            "fund_days_excluded",
            extra={
                "reason": "missing_liquidity_data",
                "n_fund_days": n_bad,
                "sample": [
                    {"date": view.dates[t].strftime("%Y-%m-%d"), "fund_id": str(view.fund_ids[i])}
                    for t, i in zip(t_idx[:3], i_idx[:3])
                ],
            },
        )
    return LiquidityMeasures(
        view=view,
        settings=settings,
        pos_illiq=illiq,
        pos_conc=conc,
        pos_illiq_direct=direct,
        fund_illiq=fund_illiq,
        fund_conc=fund_conc,
        fund_size=size,
        fund_illiq_direct=fund_direct,
        fund_eff_liq=sum_eff,
    )

def fund_measures(
    fund_id: Any,
    date: Any,
    panel: MarketPanel,
    eta: float = 0.5,
    settings: IlliquiditySettings | None = None,
) -> dict[str, float]:
    """Measures for one fund-day, computed directly from its holdings."""
    settings = settings or IlliquiditySettings(eta=eta)
    date = pd.Timestamp(date)
    positions = panel.holdings.loc[(panel.holdings["fund_id"] == fund_id) & (panel.holdings["date"] == date)]
    if positions.empty:
        raise InputValidationError(f"fund {fund_id} holds nothing on {date:%Y-%m-%d}")
    securities = panel.securities.loc[panel.securities["date"] == date].set_index("security_id")
    fund = panel.funds.loc[(panel.funds["fund_id"] == fund_id) & (panel.funds["date"] == date)]
    aum = float(fund["aum"].iloc[0])
    rows = securities.reindex(positions["security_id"])
    supply = (rows["dollar_volume"] if settings.supply == "volume" else rows["market_cap"]).to_numpy(dtype=float)
    sigma = rows["volatility"].to_numpy(dtype=float) if settings.vol_prefactor else np.ones(len(rows))
    if not (np.isfinite(supply).all() and np.isfinite(sigma).all()):
        raise InputValidationError(f"fund {fund_id} on {date:%Y-%m-%d}: held security lacks liquidity data")
    w = positions["weight"].to_numpy(dtype=float)
    eff = effective_liquidity(supply, sigma, settings.eta) if settings.vol_prefactor else supply
    total = float(eff.sum())
    conc = position_concentration(w, eff / total, settings.eta)
    size = fund_size(aum, total)
    direct = position_illiquidity(w, aum, supply, sigma, settings.eta)
    if settings.aggregation == "outer_power":
        illiq = float((w * direct).sum() ** (1.0 / settings.eta))
    else:
        illiq = float((w * conc * size).sum())
    return {
        "fund_illiq": illiq,
        "fund_conc": float((w * conc).sum()),
        "fund_size": size,
        "fund_illiq_direct": float((w * direct).sum()),
        "fund_eff_liq": total,
    }
