from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from conftest import make_tables, panel_from_tables
from flowlab.errors import InputValidationError
from flowlab.extract import load_panel, write_panel
from flowlab.model import MarketPanel
from flowlab.transform import (
    FFILL_LIMIT,
    apply_sample_filters,
    compute_flows,
    flow_driven_trade,
    flow_driven_trades,
    winsorize_flows,
)

POSITIONS = {"F1": {"S1": 0.05, "S2": 0.95}}
# 100 new shares at a 10 USD nav on a 100,000 USD fund
ISSUE = {"F1": [10_000.0, 10_100.0, 10_100.0]}


def fund_rows(panel: MarketPanel, fund_id: str) -> pd.DataFrame:
    return panel.funds.loc[panel.funds["fund_id"] == fund_id].sort_values("date").reset_index(drop=True)


def test_flow_from_share_issuance():
    panel = panel_from_tables(make_tables(POSITIONS, 3, shares=ISSUE))
    rows = fund_rows(panel, "F1")
    assert rows.loc[1, "flow_dollar"] == pytest.approx(1_000.0)
    assert rows.loc[1, "flow_rel"] == pytest.approx(0.01)
    assert rows.loc[2, "flow_dollar"] == 0.0
    assert rows.loc[2, "flow_rel"] == 0.0


def test_first_day_flow_is_absent_not_zero():
    panel = panel_from_tables(make_tables(POSITIONS, 3, shares=ISSUE))
    first = fund_rows(panel, "F1").iloc[0]
    assert not first["flow_present"]
    assert np.isnan(first["flow_rel"])
    assert np.isnan(panel.dense.flow_rel[0, 0])


def test_compute_flows_is_idempotent():
    panel = panel_from_tables(make_tables(POSITIONS, 3, shares=ISSUE))
    once = compute_flows(panel)
    twice = compute_flows(once)
    pd.testing.assert_frame_equal(once.funds, twice.funds)


def test_missing_prior_day_leaves_flow_absent():
    tables = make_tables(POSITIONS, 3, shares=ISSUE)
    day = tables["funds"]["date"].sort_values().unique()[1]
    tables["funds"] = tables["funds"].loc[tables["funds"]["date"] != day]
    tables["holdings"] = tables["holdings"].loc[tables["holdings"]["date"] != day]
    rows = fund_rows(panel_from_tables(tables), "F1")
    assert len(rows) == 2
    assert not rows["flow_present"].any()


def test_non_positive_nav_rows_are_rejected():
    tables = make_tables(POSITIONS, 3, shares=ISSUE)
    funds = tables["funds"]
    funds.loc[funds["date"] == funds["date"].min(), "nav_price"] = 0.0
    panel = panel_from_tables(tables)
    rows = fund_rows(panel, "F1")
    assert len(rows) == 2
    assert (rows["nav_price"] > 0).all()
    assert not rows.iloc[0]["flow_present"]
    assert panel.holdings["date"].min() > funds["date"].min()


def test_flow_driven_trade():
    panel = panel_from_tables(make_tables(POSITIONS, 3, shares=ISSUE))
    day = panel.calendar[1]
    assert flow_driven_trade("F1", "S1", day, panel) == pytest.approx(50.0)
    assert flow_driven_trade("F1", "S2", day, panel) == pytest.approx(950.0)
    assert flow_driven_trade("F1", "S1", panel.calendar[2], panel) == 0.0
    assert flow_driven_trade("F1", "S1", panel.calendar[0], panel) is None
    assert flow_driven_trade("F1", "S9", day, panel) is None


def test_flow_driven_trades_sum_to_dollar_flow(sim_panel):
    trades = flow_driven_trades(sim_panel).groupby(["date", "fund_id"])["q"].sum()
    flows = sim_panel.funds.set_index(["date", "fund_id"])["flow_dollar"].reindex(trades.index)
    np.testing.assert_allclose(trades.to_numpy(), flows.to_numpy(), rtol=1e-10, atol=1e-6)


def test_holdings_gap_forward_filled_up_to_limit():
    n_days = FFILL_LIMIT + 5
    tables = make_tables(POSITIONS, n_days)
    dates = tables["funds"]["date"].sort_values().unique()
    gap = dates[1 : FFILL_LIMIT + 3]
    tables["holdings"] = tables["holdings"].loc[~tables["holdings"]["date"].isin(gap)]
    panel = panel_from_tables(tables)
    filled = panel.holdings.loc[panel.holdings["filled"]]
    assert filled["date"].nunique() == FFILL_LIMIT
    assert filled["date"].max() == pd.Timestamp(dates[FFILL_LIMIT])
    np.testing.assert_allclose(filled.groupby("date")["weight"].sum(), 1.0)
    assert not panel.dense.held[FFILL_LIMIT + 1, 0]


def _flow_panel(values: np.ndarray) -> MarketPanel:
    day = pd.Timestamp("2021-03-01")
    funds = pd.DataFrame(
        {
            "date": day,
            "fund_id": [f"F{k:03d}" for k in range(values.size)],
            "flow_rel": values,
            "flow_present": True,
        }
    )
    return MarketPanel(
        calendar=pd.DatetimeIndex([day]),
        securities=pd.DataFrame(),
        funds=funds,
        holdings=pd.DataFrame(),
    )


def test_winsorize_clamps_order_statistics():
    values = np.arange(101) / 100.0
    out = winsorize_flows(_flow_panel(values), 0.01, 0.99).funds
    assert out["flow_rel"].min() == pytest.approx(0.01)
    assert out["flow_rel"].max() == pytest.approx(0.99)
    np.testing.assert_array_equal(out["flow_rel_raw"], values)
    interior = (values >= 0.02) & (values <= 0.98)
    np.testing.assert_array_equal(out["flow_rel"][interior], values[interior])


def test_winsorize_full_range_is_identity():
    values = np.random.default_rng(1).normal(size=50)
    out = winsorize_flows(_flow_panel(values), 0.0, 1.0).funds
    np.testing.assert_array_equal(out["flow_rel"], values)


def test_winsorize_skips_thin_dates():
    values = np.linspace(-1.0, 1.0, 10)
    out = winsorize_flows(_flow_panel(values), 0.1, 0.9).funds
    np.testing.assert_array_equal(out["flow_rel"], values)


def test_winsorize_rejects_bad_bounds():
    with pytest.raises(InputValidationError):
        winsorize_flows(_flow_panel(np.zeros(30)), 0.9, 0.1)


def test_sample_filter_keeps_active_funds():
    tables = make_tables({"F1": {"S1": 1.0}, "F2": {"S1": 0.5, "S2": 0.5}}, 3)
    tables["funds"].loc[tables["funds"]["fund_id"] == "F2", "is_active"] = True
    panel = panel_from_tables(tables)
    active = apply_sample_filters(panel, "active")
    passive = apply_sample_filters(panel, "passive")
    assert set(active.funds["fund_id"]) == {"F2"}
    assert set(passive.holdings["fund_id"]) == {"F1"}


def test_top_liquidity_universe_renormalizes_weights():
    tables = make_tables({"F1": {"S1": 0.2, "S2": 0.3, "S3": 0.5}}, 3)
    panel = apply_sample_filters(panel_from_tables(tables), top_liquidity_n=2)
    assert set(panel.holdings["security_id"]) == {"S2", "S3"}
    np.testing.assert_allclose(panel.holdings.groupby("date")["weight"].sum(), 1.0)


def test_write_then_load_reproduces_derived_fields(sim_panel, tmp_path):
    write_panel(sim_panel, tmp_path)
    loaded = load_panel(tmp_path)
    assert loaded.calendar.equals(sim_panel.calendar)
    np.testing.assert_allclose(loaded.dense.flow_rel, sim_panel.dense.flow_rel, rtol=0, atol=1e-12, equal_nan=True)
    np.testing.assert_allclose(loaded.dense.weights, sim_panel.dense.weights, rtol=0, atol=1e-12)
    np.testing.assert_allclose(loaded.dense.volatility, sim_panel.dense.volatility, rtol=1e-12, equal_nan=True)


def test_missing_column_names_file_and_column(tmp_path):
    tables = make_tables(POSITIONS, 3)
    tables["securities"] = tables["securities"].drop(columns=["close"])
    for name, frame in tables.items():
        frame.to_csv(tmp_path / f"{name}.csv", index=False)
    with pytest.raises(InputValidationError, match=r"securities\.csv.*close"):
        load_panel(tmp_path)
