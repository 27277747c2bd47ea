from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
import statsmodels.api as sm

from flowlab.econometrics import (
    PanelDesign,
    RegressionFit,
    absorb_fixed_effects,
    clustered_covariance,
    cumulative_coefficients,
    distributed_lag,
    gauss_newton,
    nlls_exp_decay,
    ols_clustered,
    variance_share,
    wald_equal,
)
from flowlab.econometrics.fixed_effects import group_means
from flowlab.econometrics.nlls import _ExpDecayModel
from flowlab.econometrics.ols import clip_psd
from flowlab.errors import EstimationError, InputValidationError

N_FUNDS = 20
N_DAYS = 10


def balanced_panel(seed: int = 0) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    funds = np.repeat([f"F{i:02d}" for i in range(N_FUNDS)], N_DAYS)
    dates = np.tile(pd.bdate_range("2020-01-01", periods=N_DAYS), N_FUNDS)
    alpha = np.repeat(rng.normal(size=N_FUNDS), N_DAYS)
    gamma = np.tile(rng.normal(size=N_DAYS), N_FUNDS)
    x1 = rng.normal(size=funds.size) + 0.5 * alpha
    x2 = rng.normal(size=funds.size) - 0.3 * gamma
    y = 1.5 * x1 - 0.7 * x2 + alpha + gamma + 0.1 * rng.normal(size=funds.size)
    return pd.DataFrame({"fund_id": funds, "date": dates, "x1": x1, "x2": x2, "y": y})


def test_two_way_fe_matches_dummy_regression():
    frame = balanced_panel()
    design = PanelDesign.from_frame(frame, "y", ["x1", "x2"], fe=["fund_id", "date"], cluster=["fund_id"])
    fit = ols_clustered(design)

    fund_dummies = pd.get_dummies(frame["fund_id"], drop_first=True, dtype=float)
    date_dummies = pd.get_dummies(frame["date"], drop_first=True, dtype=float)
    X = np.column_stack([np.ones(len(frame)), frame[["x1", "x2"]].to_numpy(), fund_dummies, date_dummies])
    beta = np.linalg.lstsq(X, frame["y"].to_numpy(), rcond=None)[0]

    assert fit.columns == ("x1", "x2")
    np.testing.assert_allclose(fit.coef, beta[1:3], rtol=0, atol=1e-8)


def test_one_way_absorption_leaves_zero_group_means():
    frame = balanced_panel(1)
    design = PanelDesign.from_frame(frame, "y", ["x1", "x2"], fe=["fund_id"])
    absorbed = absorb_fixed_effects(design)
    stacked = np.column_stack([absorbed.y, absorbed.X])
    np.testing.assert_allclose(group_means(design.fe[0], stacked), 0.0, atol=1e-12)
    assert absorbed.fe_iterations == 1


def test_no_fixed_effects_is_identity_and_adds_constant():
    frame = balanced_panel(2)
    design = PanelDesign.from_frame(frame, "y", ["x1"])
    assert design.columns == ("const", "x1")
    assert absorb_fixed_effects(design) is design


def test_exact_fit_has_zero_standard_errors():
    x = np.linspace(-1.0, 1.0, 50)
    frame = pd.DataFrame({"x": x, "y": 2.0 * x})
    fit = ols_clustered(PanelDesign.from_frame(frame, "y", ["x"], entity=None, time=None))
    assert fit.coefficient("x") == pytest.approx(2.0, abs=1e-12)
    assert fit.stderr("x") < 1e-12


def test_singleton_clusters_collapse_to_hc1():
    rng = np.random.default_rng(3)
    n = 200
    x = rng.normal(size=n)
    frame = pd.DataFrame({"x": x, "y": 0.5 * x + rng.normal(size=n) * (1 + np.abs(x)), "c1": np.arange(n), "c2": np.arange(n)[::-1]})
    hc1 = ols_clustered(PanelDesign.from_frame(frame, "y", ["x"], entity=None, time=None))
    clustered = ols_clustered(PanelDesign.from_frame(frame, "y", ["x"], cluster=["c1", "c2"], entity=None, time=None))
    np.testing.assert_allclose(clustered.cov, hc1.cov, rtol=1e-10)


def test_two_way_cluster_sandwich_matches_direct_sum():
    rng = np.random.default_rng(4)
    n = 600
    a = rng.integers(0, 25, size=n)
    b = rng.integers(0, 30, size=n)
    x = rng.normal(size=n) + rng.normal(size=25)[a]
    e = rng.normal(size=n) + rng.normal(size=25)[a] + rng.normal(size=30)[b]
    X = np.column_stack([np.ones(n), x])
    y = X @ np.array([0.1, 0.4]) + e
    coef = np.linalg.lstsq(X, y, rcond=None)[0]
    resid = y - X @ coef
    bread = np.linalg.inv(X.T @ X)

    def sandwich(codes: np.ndarray) -> np.ndarray:
        groups = np.unique(codes)
        meat = np.zeros((2, 2))
        for g in groups:
            score = X[codes == g].T @ resid[codes == g]
            meat += np.outer(score, score)
        return bread @ meat @ bread

    def factor(g: int) -> float:
        return g / (g - 1) * (n - 1) / (n - 2)

    joint = a * 100 + b
    g_a, g_b = np.unique(a).size, np.unique(b).size
    expected = factor(g_a) * sandwich(a) + factor(g_b) * sandwich(b) - factor(min(g_a, g_b)) * sandwich(joint)

    cov, counts = clustered_covariance(X, resid, bread, (a, b))
    assert counts == (g_a, g_b)
    np.testing.assert_allclose(cov, clip_psd(expected), rtol=1e-9, atol=1e-12 * np.abs(expected).max())


def test_rank_deficiency_names_collinear_column():
    rng = np.random.default_rng(5)
    x = rng.normal(size=40)
    frame = pd.DataFrame({"x": x, "x_copy": 2.0 * x, "y": x + rng.normal(size=40)})
    with pytest.raises(EstimationError, match="collinear"):
        ols_clustered(PanelDesign.from_frame(frame, "y", ["x", "x_copy"], entity=None, time=None))


def test_single_cluster_is_an_error():
    rng = np.random.default_rng(6)
    frame = pd.DataFrame({"x": rng.normal(size=30), "y": rng.normal(size=30), "c": 1})
    with pytest.raises(EstimationError, match="single group"):
        ols_clustered(PanelDesign.from_frame(frame, "y", ["x"], cluster=["c"], entity=None, time=None))


def test_missing_design_column_is_reported():
    frame = pd.DataFrame({"x": [1.0, 2.0], "y": [1.0, 2.0]})
    with pytest.raises(InputValidationError, match="z"):
        PanelDesign.from_frame(frame, "y", ["x", "z"], entity=None, time=None)


def _fit_with_cov(coef: np.ndarray, cov: np.ndarray) -> RegressionFit:
    names = tuple(f"x_lag{i}" for i in range(coef.size))
    return RegressionFit(columns=names, coef=coef, cov=cov, n_obs=100, r2=0.0, within_r2=0.0, lag_columns=names)


def test_cumulative_se_with_diagonal_covariance():
    coef = np.array([0.5, -0.1, -0.05, 0.02])
    variances = np.array([0.01, 0.04, 0.09, 0.16])
    table = cumulative_coefficients(_fit_with_cov(coef, np.diag(variances)))
    assert list(table["lag"]) == [0, 1, 2, 3]
    np.testing.assert_allclose(table["cum_coef"], np.cumsum(coef))
    np.testing.assert_allclose(table["cum_se"], np.sqrt(np.cumsum(variances)))
    np.testing.assert_allclose(table["upper"] - table["lower"], 2 * 1.96 * np.sqrt(np.cumsum(variances)))


def test_cumulative_se_single_lag_equals_coefficient_se():
    table = cumulative_coefficients(_fit_with_cov(np.array([0.3]), np.array([[0.0025]])))
    assert table["cum_se"].iloc[0] == pytest.approx(0.05)
    assert table["se"].iloc[0] == pytest.approx(0.05)


def test_cumulative_se_includes_covariances():
    cov = np.array([[0.04, -0.01], [-0.01, 0.09]])
    table = cumulative_coefficients(_fit_with_cov(np.array([0.2, 0.1]), cov))
    assert table["cum_se"].iloc[1] == pytest.approx(np.sqrt(0.04 + 0.09 - 0.02))


def test_wald_equal_identical_coefficients():
    fit = _fit_with_cov(np.array([0.3, 0.3]), np.diag([0.01, 0.01]))
    stat, pvalue = wald_equal(fit, "x_lag0", "x_lag1")
    assert stat == pytest.approx(0.0)
    assert pvalue == pytest.approx(1.0)


def _lag_design(rng: np.random.Generator, n_obs: int, n_lags: int) -> tuple[np.ndarray, tuple[str, ...]]:
    lags = rng.normal(size=(n_obs, n_lags + 1))
    return lags, tuple(f"flow_lag{i}" for i in range(n_lags + 1))


def test_impact_kernel_recovered_from_noiseless_data():
    rng = np.random.default_rng(7)
    lags, names = _lag_design(rng, 2000, 10)
    theta0, theta1, lam = 0.664, -0.087, 0.323
    kernel = np.append(theta0, theta1 * np.exp(-lam * np.arange(10)))
    design = PanelDesign(y=lags @ kernel, X=lags, columns=names)
    fit = nlls_exp_decay("impact", design, names)
    assert fit.converged
    np.testing.assert_allclose(fit.params, [theta0, theta1, lam], atol=1e-6)
    np.testing.assert_allclose(fit.kernel(), kernel, atol=1e-6)


def test_chasing_kernel_recovered_from_noiseless_data():
    rng = np.random.default_rng(8)
    lags, names = _lag_design(rng, 1500, 30)
    beta, lam = 0.2, 0.1
    decay = np.exp(-lam * np.arange(31))
    design = PanelDesign(y=lags @ (beta * decay / decay.sum()), X=lags, columns=names)
    fit = nlls_exp_decay("chasing", design, names)
    np.testing.assert_allclose(fit.params, [beta, lam], atol=1e-6)
    assert fit.kernel().sum() == pytest.approx(beta, abs=1e-6)
    assert fit.to_dict()["cumulative_kernel"] == pytest.approx(beta, abs=1e-6)


def test_kernel_residual_orthogonal_to_jacobian_at_optimum():
    rng = np.random.default_rng(11)
    lags, names = _lag_design(rng, 3000, 12)
    kernel = np.append(0.664, -0.087 * np.exp(-0.323 * np.arange(12)))
    design = PanelDesign(y=lags @ kernel + 0.05 * rng.normal(size=3000), X=lags, columns=names)
    fit = nlls_exp_decay("impact", design, names)
    model = _ExpDecayModel("impact", lags, design.y)
    jacobian = model.jacobian(fit.params)
    resid = model.residual(fit.params)
    cosine = (jacobian.T @ resid) / (np.linalg.norm(jacobian, axis=0) * np.linalg.norm(resid))
    assert fit.converged
    assert np.abs(cosine).max() < 5e-4


def test_kernel_needs_enough_lags():
    rng = np.random.default_rng(9)
    lags, names = _lag_design(rng, 100, 0)
    design = PanelDesign(y=lags[:, 0], X=lags, columns=names)
    with pytest.raises(InputValidationError):
        nlls_exp_decay("impact", design, names)


def test_gauss_newton_solves_linear_problem_in_one_step():
    A = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    target = A @ np.array([3.0, -1.0])
    result = gauss_newton(lambda x: target - A @ x, lambda x: A, np.zeros(2))
    assert result.converged
    np.testing.assert_allclose(result.x, [3.0, -1.0], atol=1e-10)


def test_variance_share():
    rng = np.random.default_rng(10)
    fundamental = rng.normal(size=500)
    impact = rng.normal(size=500)
    total = fundamental + impact
    expected = np.cov(impact, total)[0, 1] / np.var(total, ddof=1)
    assert variance_share(impact, total) == pytest.approx(expected)
    assert variance_share(total, total) == pytest.approx(1.0)
    assert np.isnan(variance_share(impact[:10], total[:10]))


def test_one_way_cluster_covariance_matches_statsmodels():
    rng = np.random.default_rng(12)
    n = 500
    groups = rng.integers(0, 40, size=n)
    x = rng.normal(size=n) + rng.normal(size=40)[groups]
    y = 0.3 + 0.8 * x + rng.normal(size=n) + rng.normal(size=40)[groups]
    frame = pd.DataFrame({"x": x, "y": y, "g": groups})
    fit = ols_clustered(PanelDesign.from_frame(frame, "y", ["x"], cluster=["g"], entity=None, time=None))
    reference = sm.OLS(y, sm.add_constant(x)).fit(cov_type="cluster", cov_kwds={"groups": groups})
    np.testing.assert_allclose(fit.coef, reference.params, rtol=1e-10)
    np.testing.assert_allclose(fit.cov, reference.cov_params(), rtol=1e-8)


def test_unclustered_covariance_matches_statsmodels_hc1():
    rng = np.random.default_rng(13)
    n = 300
    x = rng.normal(size=n)
    y = 0.5 * x + rng.normal(size=n) * (1 + np.abs(x))
    frame = pd.DataFrame({"x": x, "y": y})
    fit = ols_clustered(PanelDesign.from_frame(frame, "y", ["x"], entity=None, time=None))
    reference = sm.OLS(y, sm.add_constant(x)).fit(cov_type="HC1")
    np.testing.assert_allclose(fit.cov, reference.cov_params(), rtol=1e-8)


def test_gauss_newton_stops_on_small_change_after_halved_step():
    # optimum at x = 2 lies outside the feasible region, so every accepted step is a halved one
    result = gauss_newton(
        lambda x: np.array([2.0 - x[0]]),
        lambda x: np.ones((1, 1)),
        np.zeros(1),
        feasible=lambda x: bool(x[0] < 1.0),
    )
    assert result.converged
    assert result.message == "ssr_change"
    assert result.x[0] == pytest.approx(1.0, abs=1e-8)
    assert result.iterations < 60


def test_variance_share_independent_and_equal_split():
    rng = np.random.default_rng(14)
    fundamental = rng.normal(size=20000)
    impact = rng.normal(size=20000)
    assert variance_share(impact, fundamental) == pytest.approx(0.0, abs=0.03)
    assert variance_share(impact, fundamental + impact) == pytest.approx(0.5, abs=0.03)


def test_distributed_lag_without_lags_is_contemporaneous_regression():
    rng = np.random.default_rng(15)
    n_funds, n_days = 12, 40
    calendar = pd.bdate_range("2021-01-04", periods=n_days)
    funds = np.repeat([f"F{i:02d}" for i in range(n_funds)], n_days)
    x1 = rng.normal(size=funds.size)
    x2 = rng.normal(size=funds.size)
    frame = pd.DataFrame(
        {
            "fund_id": funds,
            "date": np.tile(calendar, n_funds),
            "x1": x1,
            "x2": x2,
            "y": 0.7 * x1 - 0.2 * x2 + rng.normal(size=funds.size),
        }
    )
    fit, _ = distributed_lag(frame, "y", "x1", 0, calendar, controls=["x2"])
    direct = ols_clustered(
        PanelDesign.from_frame(frame, "y", ["x1", "x2"], fe=["fund_id", "date"], cluster=["date", "fund_id"])
    )
    assert fit.columns == ("x1_lag0", "x2")
    np.testing.assert_allclose(fit.coef, direct.coef, rtol=1e-10)
    np.testing.assert_allclose(fit.cov, direct.cov, rtol=1e-8)


@pytest.mark.slow
def test_cumulative_se_matches_monte_carlo_dispersion():
    rng = np.random.default_rng(16)
    n_obs, n_lags, n_reps = 400, 4, 300
    names = tuple(f"x_lag{i}" for i in range(n_lags))
    kernel = np.array([0.6, -0.1, -0.05, -0.02])
    totals, reported = [], []
    for _ in range(n_reps):
        # AR(1) regressor so lagged coefficients covary
        series = np.zeros(n_obs + n_lags)
        shocks = rng.normal(size=series.size)
        for t in range(1, series.size):
            series[t] = 0.8 * series[t - 1] + shocks[t]
        X = np.column_stack([series[n_lags - s : series.size - s] for s in range(n_lags)])
        y = X @ kernel + rng.normal(size=n_obs)
        fit = ols_clustered(PanelDesign(y=y, X=X, columns=names), lag_columns=names)
        table = cumulative_coefficients(fit)
        totals.append(table["cum_coef"].iloc[-1])
        reported.append(table["cum_se"].iloc[-1])
    assert np.mean(totals) == pytest.approx(kernel.sum(), abs=0.02)
    assert np.mean(reported) / np.std(totals, ddof=1) == pytest.approx(1.0, abs=0.15)
