from __future__ import annotations

import numpy as np
import pytest

from flowlab.summary import SUMMARY_COLUMNS, describe, summarize


def test_describe_ignores_nan():
    stats = describe(np.array([1.0, np.nan, 3.0, 2.0]))
    assert stats["count"] == 3
    assert stats["mean"] == pytest.approx(2.0)
    assert stats["median"] == pytest.approx(2.0)
    assert stats["std"] == pytest.approx(1.0)


def test_describe_empty():
    stats = describe(np.array([np.nan]))
    assert stats["count"] == 0
    assert np.isnan(stats["mean"])


def test_summarize_sim_panel(sim_panel):
    table = summarize(sim_panel)
    assert list(table.columns) == list(SUMMARY_COLUMNS)
    assert table["variable"].tolist() == [
        "aum",
        "n_holdings",
        "flow_rel",
        "fund_illiq",
        "fund_conc",
        "fund_size",
        "market_adj_return",
    ]
    rows = table.set_index("variable")
    assert rows.loc["aum", "count"] == int(sim_panel.dense.present.sum())
    assert rows.loc["aum", "mean"] > 0


def test_summarize_single_fund_panel(panel_factory):
    panel = panel_factory({"F1": {"A": 0.5, "B": 0.5}}, n_days=35)
    rows = summarize(panel).set_index("variable")
    assert rows.loc["n_holdings", "mean"] == 2
    assert rows.loc["market_adj_return", "mean"] == pytest.approx(0.0, abs=1e-12)
