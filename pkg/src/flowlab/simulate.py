from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .analytics.decompose import exp_weights
from .config import SimConfig
from .extract import write_panel
from .illiquidity import direct_position_illiquidity
from .impact import ImpactParams, decay_kernel, signed_power
from .model import MarketPanel
from .paths import truth_file
from .transform import build_panel, trailing_liquidity_row
from .utils.io import read_csv_checked, write_csv
from .utils.log import setup_logger
from .utils.time import weekday_calendar

# spawn_key purposes; an entity's stream never depends on how many other entities exist
STREAMS = {"factor": 1, "security": 2, "idio": 3, "fund": 4, "holdings": 5, "flow": 6}

FLOW_FLOOR = -0.95
RETURN_FLOOR = -0.99
INITIAL_CLOSE = 50.0
TRUTH_COLUMNS = ("date", "fund_id", "fundamental_return", "impact_return", "flow", "chase_flow", "noise_flow")

def stream(seed: int, purpose: str, entity: int = 0) -> np.random.Generator:
    """PCG64 generator for one (purpose, entity) pair of a seed."""
    sequence = np.random.SeedSequence(seed, spawn_key=(STREAMS[purpose], entity))
    return np.random.Generator(np.random.PCG64(sequence))

@dataclass(frozen=True, eq=False)
class SimTruth:
    """Generating components per (date, fund); NaN before the fund's first flow day."""

    config: SimConfig
    dates: pd.DatetimeIndex
    fund_ids: np.ndarray
    security_ids: np.ndarray
    fundamental_return: np.ndarray
    impact_return: np.ndarray
    flow: np.ndarray
    chase_flow: np.ndarray
    noise_flow: np.ndarray
    security_fundamental: np.ndarray
    security_impact: np.ndarray

    @property
    def params(self) -> ImpactParams:
        return sim_params(self.config)

    def frame(self) -> pd.DataFrame:
        keep = np.isfinite(self.flow)
        t_idx, i_idx = np.nonzero(keep)
        return pd.DataFrame(
            {
                "date": self.dates[t_idx],
                "fund_id": self.fund_ids[i_idx],
                "fundamental_return": self.fundamental_return[t_idx, i_idx],
                "impact_return": self.impact_return[t_idx, i_idx],
                "flow": self.flow[t_idx, i_idx],
                "chase_flow": self.chase_flow[t_idx, i_idx],
                "noise_flow": self.noise_flow[t_idx, i_idx],
            }
        )

def sim_params(config: SimConfig) -> ImpactParams:
    return ImpactParams(theta=config.theta, eta=config.eta, decay=config.decay, max_lag=config.max_lag)

def _identifiers(prefix: str, count: int) -> np.ndarray:
    width = max(4, len(str(count)))
    return np.array([f"{prefix}{k + 1:0{width}d}" for k in range(count)], dtype=object)

def _securities(config: SimConfig) -> dict[str, np.ndarray]:
    """Static cross-section: factor loadings, idiosyncratic vol, dollar volume."""
    n_secs = config.n_securities
    loadings = np.zeros((n_secs, config.n_factors))
    idio_vol = np.empty(n_secs)
    volume = np.empty(n_secs)
    for n in range(n_secs):
        rng = stream(config.seed, "security", n)
        if config.n_factors:
            draws = rng.standard_normal(config.n_factors)
            loadings[n] = config.loading_scale * np.where(np.arange(config.n_factors) == 0, 1.0 + 0.25 * draws, 0.5 * draws)
        idio_vol[n] = config.idio_vol_median * np.exp(config.idio_vol_dispersion * rng.standard_normal())
        volume[n] = config.volume_median * np.exp(config.volume_dispersion * rng.standard_normal())
    return {"loadings": loadings, "idio_vol": idio_vol, "volume": volume}

def _funds(config: SimConfig) -> dict[str, np.ndarray]:
    """Initial AUM, activity tag and Dirichlet holdings spanning a concentration spectrum."""
    n_funds, n_secs = config.n_funds, config.n_securities
    aum = np.empty(n_funds)
    active = np.zeros(n_funds, dtype=bool)
    weights = np.zeros((n_funds, n_secs))
    log_lo, log_hi = np.log(config.concentration_min), np.log(config.concentration_max)
    for i in range(n_funds):
        rng = stream(config.seed, "fund", i)
        aum[i] = config.aum_median * np.exp(config.aum_dispersion * rng.standard_normal())
        active[i] = rng.random() < config.active_fraction
        picks = stream(config.seed, "holdings", i)
        k = int(picks.integers(config.min_holdings, min(config.max_holdings, n_secs) + 1)) if config.min_holdings <= n_secs else n_secs
        chosen = np.sort(picks.choice(n_secs, size=k, replace=False))
        alpha = np.exp(picks.uniform(log_lo, log_hi))
        draw = picks.dirichlet(np.full(k, alpha))
        # Dirichlet with small alpha can underflow to exact zeros
        draw = np.maximum(draw, 1e-12)
        weights[i, chosen] = draw / draw.sum()
    return {"aum": aum, "active": active, "weights": weights}

def generate(config: SimConfig, logger_name: str = "flowlab.simulate") -> tuple[MarketPanel, SimTruth]:
    """Run the flow -> trade -> impact -> return -> flow loop and return the panel with its ground truth.

    Securities trade over burn_in + n_days weekdays. Funds incept on the last burn-in
    day and receive flows from the first day after it. Impact is priced with the same
    floored trailing volatility and dollar volume the loader derives from the output.
    """
    config.validate()
    logger = setup_logger(logger_name)
    n_funds, n_secs = config.n_funds, config.n_securities
    n_dates = config.burn_in + config.n_days
    inception = config.burn_in - 1
    logger.info(
        "simulation_start",
        extra={"seed": config.seed, "n_funds": n_funds, "n_securities": n_secs, "n_dates": n_dates},
    )

    dates = weekday_calendar(config.start_date, n_dates)
    fund_ids = _identifiers("F", n_funds)
    security_ids = _identifiers("S", n_secs)
    secs = _securities(config)
    funds = _funds(config)
    params = sim_params(config)
    kernel = decay_kernel(params)
    chase_weights = exp_weights(config.chase_lambda, config.chase_lags)

    factors = stream(config.seed, "factor").standard_normal((n_dates, config.n_factors)) * config.factor_vol
    idio = np.empty((n_dates, n_secs))
    for n in range(n_secs):
        idio[:, n] = stream(config.seed, "idio", n).standard_normal(n_dates) * secs["idio_vol"][n]
    noise = np.empty((n_dates, n_funds))
    for i in range(n_funds):
        noise[:, i] = stream(config.seed, "flow", i).standard_normal(n_dates) * config.flow_vol
    fundamental = factors @ secs["loadings"].T + idio

    volume = np.broadcast_to(secs["volume"], (n_dates, n_secs)).copy()
    ret = np.zeros((n_dates, n_secs))
    pressure = np.zeros((n_dates, n_secs))
    impact = np.zeros((n_dates, n_secs))

    weights = np.zeros((n_dates, n_funds, n_secs))
    nav = np.full((n_dates, n_funds), np.nan)
    shares = np.full((n_dates, n_funds), np.nan)
    fund_ret = np.full((n_dates, n_funds), np.nan)
    impact_ret = np.full((n_dates, n_funds), np.nan)
    flow = np.full((n_dates, n_funds), np.nan)
    chase = np.full((n_dates, n_funds), np.nan)
    # chased signal; zero before inception
    signal = np.zeros((n_dates, n_funds))
    n_clipped = 0
    n_ret_clipped = 0

    for t in range(n_dates):
        if t > inception:
            w_prev = weights[t - 1]
            aum_prev = nav[t - 1] * shares[t - 1]
            dollar_volume, volatility = trailing_liquidity_row(ret, volume, t - 1)
            pos_illiq = np.nan_to_num(direct_position_illiquidity(w_prev, aum_prev, dollar_volume, volatility, config.eta))

            history = signal[max(0, t - 1 - config.chase_lags) : t][::-1]
            chase[t] = config.chase_beta * (chase_weights[: history.shape[0]] @ history)
            f = config.flow_drift + chase[t] + noise[t]
            clipped = f < FLOW_FLOOR
            if clipped.any():
                n_clipped += int(clipped.sum())
                f = np.where(clipped, FLOW_FLOOR, f)
            flow[t] = f
            pressure[t] = signed_power(f, config.eta) @ pos_illiq

        window = kernel[: t + 1]
        impact[t] = window @ pressure[t::-1][: window.size]
        r = fundamental[t] + impact[t]
        low = r <= RETURN_FLOOR
        if low.any():
            n_ret_clipped += int(low.sum())
            r = np.where(low, RETURN_FLOOR, r)
        ret[t] = r

        if t == inception:
            weights[t] = funds["weights"]
            nav[t] = config.initial_nav
            shares[t] = funds["aum"] / config.initial_nav
        elif t > inception:
            growth = w_prev @ r
            fund_ret[t] = growth
            impact_ret[t] = w_prev @ impact[t]
            nav[t] = nav[t - 1] * (1.0 + growth)
            # F_t = f_t A_{t-1}, issued at P_{t-1}
            shares[t] = shares[t - 1] + flow[t] * aum_prev / nav[t - 1]
            weights[t] = w_prev * (1.0 + r) / (1.0 + growth)[:, None]
            if config.chase_mode == "observed":
                signal[t] = growth
            else:
                signal[t] = growth - impact_ret[t]

    if n_clipped:
        logger.warning("flows_clipped", extra={"floor": FLOW_FLOOR, "n_fund_days": n_clipped})
    if n_ret_clipped:
        logger.warning("returns_clipped", extra={"floor": RETURN_FLOOR, "n_security_days": n_ret_clipped})

    close = INITIAL_CLOSE * np.cumprod(1.0 + ret, axis=0)
    security_shares = secs["volume"] / config.turnover / INITIAL_CLOSE
    t_idx, n_idx = np.meshgrid(np.arange(n_dates), np.arange(n_secs), indexing="ij")
    securities = pd.DataFrame(
        {
            "date": dates[t_idx.ravel()],
            "security_id": security_ids[n_idx.ravel()],
            "ret": ret.ravel(),
            "close": close.ravel(),
            "volume_usd": volume.ravel(),
            "market_cap": (close * security_shares).ravel(),
            "shares_outstanding": np.broadcast_to(security_shares, (n_dates, n_secs)).ravel(),
        }
    )
    live = np.isfinite(nav)
    ft, fi = np.nonzero(live)
    fund_table = pd.DataFrame(
        {
            "date": dates[ft],
            "fund_id": fund_ids[fi],
            "nav_price": nav[ft, fi],
            "shares_outstanding": shares[ft, fi],
            "is_active": funds["active"][fi],
        }
    )
    ht, hi, hn = np.nonzero(weights > 0)
    holdings = pd.DataFrame(
        {
            "date": dates[ht],
            "fund_id": fund_ids[hi],
            "security_id": security_ids[hn],
            "dollar_position": weights[ht, hi, hn] * nav[ht, hi] * shares[ht, hi],
        }
    )
    panel = build_panel(securities, fund_table, holdings, dates)

    truth = SimTruth(
        config=config,
        dates=dates,
        fund_ids=fund_ids,
        security_ids=security_ids,
        fundamental_return=fund_ret - impact_ret,
        impact_return=impact_ret,
        flow=flow,
        chase_flow=chase,
        noise_flow=flow - chase,
        security_fundamental=ret - impact,
        security_impact=impact,
    )
    logger.info(
        "simulation_end",
        extra={"seed": config.seed, "n_holdings": int(len(holdings)), "n_flow_days": int(np.isfinite(flow).sum())},
    )
    return panel, truth

def write_simulation(panel: MarketPanel, truth: SimTruth, out_dir: str | Path) -> dict[str, Path]:
    """Three panel CSVs plus truth.csv."""
    paths = write_panel(panel, out_dir)
    frame = truth.frame().sort_values(["date", "fund_id"], kind="mergesort")
    paths["truth"] = write_csv(truth_file(out_dir), frame.loc[:, list(TRUTH_COLUMNS)])
    return paths

def load_truth(panel_dir: str | Path) -> pd.DataFrame:
    frame = read_csv_checked(truth_file(panel_dir), TRUTH_COLUMNS)
    frame["date"] = pd.to_datetime(frame["date"]).dt.normalize()
    frame["fund_id"] = frame["fund_id"].astype(str)
    return frame
