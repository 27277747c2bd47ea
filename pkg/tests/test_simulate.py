from __future__ import annotations

from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from conftest import SIM_CONFIG
from flowlab.config import SimConfig
from flowlab.simulate import TRUTH_COLUMNS, generate, load_truth, stream, write_simulation


def test_same_seed_same_market(sim_panel):
    panel, _ = generate(SIM_CONFIG)
    pd.testing.assert_frame_equal(panel.funds, sim_panel.funds)
    pd.testing.assert_frame_equal(panel.holdings, sim_panel.holdings)
    pd.testing.assert_frame_equal(panel.securities, sim_panel.securities)


def test_different_seed_different_market(sim_panel):
    panel, _ = generate(replace(SIM_CONFIG, seed=8))
    assert not np.allclose(panel.funds["nav_price"].to_numpy(), sim_panel.funds["nav_price"].to_numpy())


def test_streams_do_not_depend_on_population():
    a = stream(11, "flow", 3).standard_normal(5)
    b = stream(11, "flow", 3).standard_normal(5)
    c = stream(11, "flow", 4).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_adding_funds_keeps_existing_flow_noise():
    config = replace(SIM_CONFIG, n_days=20)
    _, small = generate(config)
    _, large = generate(replace(config, n_funds=config.n_funds + 3))
    np.testing.assert_array_equal(large.noise_flow[:, : config.n_funds], small.noise_flow)


def test_calendar_and_inception(sim_panel, sim_truth):
    assert sim_panel.calendar.size == SIM_CONFIG.burn_in + SIM_CONFIG.n_days
    first_fund_day = sim_panel.funds["date"].min()
    assert first_fund_day == sim_panel.calendar[SIM_CONFIG.burn_in - 1]
    flow_days = np.isfinite(sim_truth.flow).any(axis=1).sum()
    assert flow_days == SIM_CONFIG.n_days


def test_flows_round_trip_through_shares(sim_panel, sim_truth):
    ok = np.isfinite(sim_truth.flow)
    derived = sim_panel.dense.flow_rel
    assert np.isfinite(derived[ok]).all()
    np.testing.assert_allclose(derived[ok], sim_truth.flow[ok], rtol=0, atol=1e-10)


def test_returns_decompose_into_truth(sim_panel, sim_truth):
    ok = np.isfinite(sim_truth.flow)
    fund_return = sim_panel.dense.fund_return
    np.testing.assert_allclose(
        fund_return[ok], sim_truth.fundamental_return[ok] + sim_truth.impact_return[ok], rtol=0, atol=1e-12
    )
    np.testing.assert_allclose(sim_truth.chase_flow[ok] + sim_truth.noise_flow[ok], sim_truth.flow[ok], atol=1e-15)


def test_positions_follow_prices(sim_panel):
    view = sim_panel.dense
    held = view.held[1:] & view.held[:-1]
    t_idx, i_idx = np.nonzero(held)
    t, i = t_idx[-1] + 1, i_idx[-1]
    # the flow buys the prior-day basket, then everything earns the security return
    before = view.weights[t - 1, i] * view.aum[t - 1, i]
    after = view.weights[t, i] * view.aum[t, i]
    expected = (before + view.weights[t - 1, i] * view.flow_dollar[t, i]) * (1.0 + view.ret[t])
    np.testing.assert_allclose(after, expected, rtol=1e-8, atol=1e-6)
    np.testing.assert_allclose(view.weights[view.held].sum(axis=-1), 1.0, atol=1e-12)


def test_no_impact_no_chasing_gives_fundamental_returns():
    config = replace(SIM_CONFIG, theta=0.0, chase_beta=0.0, n_days=20)
    panel, truth = generate(config)
    assert np.nanmax(np.abs(truth.impact_return)) == 0.0
    np.testing.assert_array_equal(truth.security_impact, 0.0)
    np.testing.assert_allclose(truth.chase_flow[np.isfinite(truth.flow)], 0.0)
    returns = panel.dense.ret
    np.testing.assert_allclose(returns, truth.security_fundamental, atol=1e-15)


def test_chasing_flow_follows_past_returns():
    config = replace(SIM_CONFIG, chase_beta=0.2, chase_lambda=0.5, chase_lags=3, n_days=20)
    panel, truth = generate(config)
    view = panel.dense
    weights = np.exp(-0.5 * np.arange(4))
    weights /= weights.sum()
    t = view.dates.size - 1
    history = np.stack([view.fund_return[t - 1 - s] for s in range(4)])
    np.testing.assert_allclose(truth.chase_flow[t], 0.2 * weights @ history, rtol=1e-10)


def test_write_and_load_truth(sim_run, tmp_path):
    panel, truth = sim_run
    paths = write_simulation(panel, truth, tmp_path)
    assert set(paths) == {"securities", "funds", "holdings", "truth"}
    loaded = load_truth(tmp_path)
    assert list(loaded.columns) == list(TRUTH_COLUMNS)
    assert len(loaded) == int(np.isfinite(truth.flow).sum())
    expected = truth.frame().sort_values(["date", "fund_id"], kind="mergesort").reset_index(drop=True)
    np.testing.assert_array_equal(loaded["flow"].to_numpy(), expected["flow"].to_numpy())


def test_invalid_flow_settings_rejected():
    with pytest.raises(ValueError):
        generate(replace(SIM_CONFIG, flow_vol=0.5))
    with pytest.raises(ValueError):
        SimConfig(burn_in=10).validate()
