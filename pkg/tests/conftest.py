from __future__ import annotations

from typing import Callable

import numpy as np
import pandas as pd
import pytest

from flowlab.config import SimConfig
from flowlab.model import MarketPanel
from flowlab.simulate import SimTruth, generate
from flowlab.transform import build_panel

SIM_CONFIG = SimConfig(n_funds=12, n_securities=15, n_days=80, burn_in=31, seed=7)

Positions = dict[str, dict[str, float]]


def make_tables(
    positions: Positions,
    n_days: int = 40,
    *,
    nav: float = 10.0,
    shares: dict[str, list[float]] | None = None,
    navs: dict[str, list[float]] | None = None,
    seed: int = 0,
) -> dict[str, pd.DataFrame]:
    """Raw securities/funds/holdings tables with constant weights and navs.

    `shares` and `navs` override a fund's daily shares outstanding (default 10,000) and nav.
    """
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range("2021-01-04", periods=n_days)
    security_ids = sorted({sec for weights in positions.values() for sec in weights})
    sec_rows = []
    for k, sec in enumerate(security_ids):
        ret = rng.normal(0.0, 0.01, size=n_days)
        close = 20.0 * np.cumprod(1.0 + ret)
        for t, day in enumerate(dates):
            sec_rows.append(
                {
                    "date": day,
                    "security_id": sec,
                    "ret": ret[t],
                    "close": close[t],
                    "volume_usd": 1.0e6 * (k + 1),
                    "market_cap": 1.0e8 * (k + 1),
                    "shares_outstanding": 5.0e6,
                }
            )
    fund_rows = []
    holding_rows = []
    for fund, weights in positions.items():
        path = (shares or {}).get(fund, [10_000.0] * n_days)
        prices = (navs or {}).get(fund, [nav] * n_days)
        for t, day in enumerate(dates):
            fund_rows.append({"date": day, "fund_id": fund, "nav_price": prices[t], "shares_outstanding": path[t], "is_active": False})
            for sec, w in weights.items():
                holding_rows.append({"date": day, "fund_id": fund, "security_id": sec, "dollar_position": w * prices[t] * path[t]})
    return {
        "securities": pd.DataFrame(sec_rows),
        "funds": pd.DataFrame(fund_rows),
        "holdings": pd.DataFrame(holding_rows),
    }


def panel_from_tables(tables: dict[str, pd.DataFrame]) -> MarketPanel:
    return build_panel(tables["securities"], tables["funds"], tables["holdings"])


@pytest.fixture
def tables_factory() -> Callable[..., dict[str, pd.DataFrame]]:
    return make_tables


@pytest.fixture
def panel_factory() -> Callable[..., MarketPanel]:
    def factory(positions: Positions, n_days: int = 40, **kwargs) -> MarketPanel:
        return panel_from_tables(make_tables(positions, n_days, **kwargs))

    return factory


@pytest.fixture(scope="session")
def sim_run() -> tuple[MarketPanel, SimTruth]:
    return generate(SIM_CONFIG)


@pytest.fixture(scope="session")
def sim_panel(sim_run) -> MarketPanel:
    return sim_run[0]


@pytest.fixture(scope="session")
def sim_truth(sim_run) -> SimTruth:
    return sim_run[1]
