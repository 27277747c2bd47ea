from __future__ import annotations

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from conftest import make_tables, panel_from_tables
from flowlab.config import SimConfig
from flowlab.errors import InputValidationError
from flowlab.illiquidity import liquidity_measures
from flowlab.impact import (
    ImpactParams,
    ait,
    ait_hat,
    ait_series,
    creation_baskets,
    cross_fund_illiquidity,
    decay_kernel,
    impact_series,
    long_run_impact,
    price_impact,
    self_inflated_return,
    total_impact,
)
from flowlab.simulate import generate, sim_params

DECAY = (0.664, -0.087, 0.323)


def test_price_impact_examples():
    params = ImpactParams(theta=1.0, eta=1.0)
    assert price_impact(0.0, 1.0e6, 0.013, params) == 0.0
    assert price_impact(3.5e6, 1.0e6, 0.013, params) == pytest.approx(0.0455)
    assert price_impact(-0.25e6, 1.0e6, 0.02, ImpactParams(theta=0.78, eta=0.5)) == pytest.approx(-0.0078)


def test_price_impact_is_odd_and_monotone():
    params = ImpactParams()
    trades = np.linspace(0.0, 5.0e6, 11)
    up = price_impact(trades, 1.0e6, 0.02, params)
    np.testing.assert_allclose(price_impact(-trades, 1.0e6, 0.02, params), -up)
    assert (np.diff(up) > 0).all()
    with pytest.raises(InputValidationError):
        price_impact(1.0, 0.0, 0.02, params)


def test_self_inflated_return():
    params = ImpactParams(theta=0.78, eta=0.5)
    assert self_inflated_return(0.04, 0.3, params) == pytest.approx(0.0468)
    assert self_inflated_return(0.0, 0.3, params) == 0.0
    assert self_inflated_return(-0.04, 0.3, params) == pytest.approx(-0.0468)


def test_position_impacts_aggregate_to_self_inflated_return():
    rng = np.random.default_rng(0)
    params = ImpactParams(theta=0.78, eta=0.5)
    w = rng.dirichlet(np.ones(8))
    V = rng.uniform(1.0e6, 1.0e8, size=8)
    sigma = rng.uniform(0.005, 0.03, size=8)
    aum, f = 2.0e8, -0.015
    per_position = price_impact(w * f * aum, V, sigma, params)
    fund_illiq = float(np.sum(w * sigma * (w * aum / V) ** params.eta))
    assert float(np.sum(w * per_position)) == pytest.approx(self_inflated_return(f, fund_illiq, params), rel=1e-12)


def test_long_run_impact_of_decay_kernel():
    params = ImpactParams(decay=DECAY, max_lag=40)
    assert long_run_impact(params) == pytest.approx(0.349, abs=5e-4)
    assert long_run_impact(params, formula="printed") == pytest.approx(0.664 + 0.087 / 0.323)
    assert long_run_impact(ImpactParams(theta=0.5)) == 0.5


def test_decay_kernel_is_geometric():
    params = ImpactParams(decay=DECAY, max_lag=60)
    kernel = decay_kernel(params)
    assert kernel[0] == 0.664
    assert kernel[1] == pytest.approx(-0.087)
    np.testing.assert_allclose(kernel[2:] / kernel[1:-1], np.exp(-0.323))
    assert kernel.sum() == pytest.approx(long_run_impact(params, horizon=60), abs=1e-12)
    assert decay_kernel(ImpactParams(theta=0.3)).tolist() == [0.3]


def test_params_validation():
    with pytest.raises(InputValidationError):
        ImpactParams(theta=-0.1)
    with pytest.raises(InputValidationError):
        ImpactParams(decay=(0.6, -0.1, 0.0))


@pytest.fixture(scope="module")
def one_fund_panel():
    config = SimConfig(n_funds=1, n_securities=8, n_days=30, burn_in=31, seed=3)
    panel, _ = generate(config)
    return panel


def test_one_fund_total_equals_own_impact(one_fund_panel):
    params = ImpactParams(theta=0.78, eta=0.5)
    series = impact_series(one_fund_panel, params)
    ok = np.isfinite(series.r_self)
    assert ok.sum() >= 29
    np.testing.assert_allclose(series.r_total[ok], series.r_self[ok], rtol=1e-12, atol=1e-18)
    t = int(np.nonzero(ok[:, 0])[0][-1])
    date = one_fund_panel.calendar[t]
    assert total_impact("F0001", date, one_fund_panel, params) == pytest.approx(series.r_self[t, 0], rel=1e-12)


def test_total_impact_matches_series_with_decay(sim_panel):
    params = ImpactParams(decay=DECAY, max_lag=10)
    series = impact_series(sim_panel, params)
    view = series.view
    t = view.dates.size - 1
    for i in (0, 5):
        expected = total_impact(view.fund_ids[i], view.dates[t], sim_panel, params)
        assert series.r_total[t, i] == pytest.approx(expected, rel=1e-10)


def test_lagged_exposure_matches_pointwise(sim_panel):
    params = ImpactParams(decay=DECAY, max_lag=5)
    series = impact_series(sim_panel, params, exposure="lagged")
    view = series.view
    t = view.dates.size - 3
    expected = total_impact(view.fund_ids[2], view.dates[t], sim_panel, params, exposure="lagged")
    assert series.r_total[t, 2] == pytest.approx(expected, rel=1e-10)


def test_total_impact_is_linear_in_theta(sim_panel):
    base = impact_series(sim_panel, ImpactParams(theta=0.5))
    doubled = impact_series(sim_panel, ImpactParams(theta=1.0))
    ok = np.isfinite(base.r_total)
    np.testing.assert_allclose(doubled.r_total[ok], 2.0 * base.r_total[ok], rtol=1e-12, atol=1e-18)


def test_impact_series_reproduces_simulated_impact(sim_panel, sim_truth):
    series = impact_series(sim_panel, sim_truth.params)
    ok = np.isfinite(sim_truth.impact_return)
    np.testing.assert_allclose(series.r_total[ok], sim_truth.impact_return[ok], rtol=1e-8, atol=1e-12)


def test_cross_fund_illiquidity_with_itself_is_own_illiquidity(sim_panel):
    measures = liquidity_measures(sim_panel)
    view = measures.view
    t = view.dates.size - 1
    for i in range(3):
        fund = view.fund_ids[i]
        value = cross_fund_illiquidity(fund, fund, view.dates[t], sim_panel, measures=measures)
        assert value == pytest.approx(measures.fund_illiq_direct[t, i], rel=1e-12)


def test_cross_fund_illiquidity_disjoint_and_asymmetric():
    positions = {"F1": {"S1": 0.5, "S2": 0.5}, "F2": {"S3": 1.0}, "F3": {"S1": 0.2, "S3": 0.8}}
    tables = make_tables(positions, 40)
    tables["funds"].loc[tables["funds"]["fund_id"] == "F3", "shares_outstanding"] = 40_000.0
    tables["holdings"].loc[tables["holdings"]["fund_id"] == "F3", "dollar_position"] *= 4.0
    panel = panel_from_tables(tables)
    day = panel.calendar[-1]
    assert cross_fund_illiquidity("F1", "F2", day, panel) == 0.0
    assert cross_fund_illiquidity("F1", "F3", day, panel) != pytest.approx(cross_fund_illiquidity("F3", "F1", day, panel))
    with pytest.raises(InputValidationError):
        cross_fund_illiquidity("F1", "F9", day, panel)


def test_ait_single_fund_example():
    shares = [10_000.0] * 39 + [10_010.0]
    tables = make_tables({"F1": {"S1": 0.5, "S2": 0.5}}, 40, shares={"F1": shares})
    tables["securities"]["market_cap"] = 10_000.0
    panel = panel_from_tables(tables)
    day = panel.calendar[-1]
    # basket q = w A / S = 0.5 * 10 USD per fund share; 10 new shares
    assert ait("S1", day, panel) == pytest.approx(0.005)
    assert ait_hat("S1", day, panel) > 0
    assert ait("S1", panel.calendar[-2], panel) == 0.0
    assert ait_hat("S1", panel.calendar[-2], panel) == 0.0


def test_ait_matches_flow_induced_trading(sim_panel):
    series = ait_series(sim_panel)
    view = series.view
    prior_weights = np.zeros_like(view.weights)
    prior_weights[1:] = view.weights[:-1]
    expected = np.einsum("tin,ti->tn", prior_weights, np.nan_to_num(view.flow_dollar)) / view.lagged(view.market_cap)
    ok = np.isfinite(series.ait)
    assert ok.sum() > 100
    np.testing.assert_allclose(series.ait[ok], expected[ok], rtol=1e-10, atol=1e-16)
    np.testing.assert_array_equal(np.sign(series.ait_hat[ok]), np.sign(series.trade[ok]))


def test_basket_override_replaces_fund_day(sim_panel):
    view = sim_panel.dense
    t = view.dates.size - 1
    override = pd.DataFrame(
        {"date": [view.dates[t]], "fund_id": [view.fund_ids[0]], "security_id": [view.security_ids[0]], "q_cu": [3.0]}
    )
    baskets = creation_baskets(sim_panel, override)
    assert baskets[t, 0, 0] == 3.0
    assert baskets[t, 0, 1:].sum() == 0.0
    np.testing.assert_array_equal(baskets[t, 1], creation_baskets(sim_panel)[t, 1])


def test_sim_params_carry_decay():
    config = SimConfig(theta1=-0.087, lambda_theta=0.323, theta=0.664)
    params = sim_params(config)
    assert params.decay == DECAY
    assert replace(params, decay=None).contemporaneous == 0.664
