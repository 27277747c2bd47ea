from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from .analytics.chasing import chasing_regression
from .analytics.decompose import decompose
from .config import SimConfig, threads_from_env
from .errors import EstimationError, InputValidationError
from .estimate import estimate_chasing_kernel, estimate_fund_impact, estimate_reversal
from .impact import long_run_impact
from .simulate import generate, sim_params
from .utils.log import setup_logger

ESTIMATORS = ("impact", "reversal", "kernel", "chasing")
RUN_COLUMNS = ("seed", "estimator", "parameter", "truth", "estimate", "se", "covered", "pvalue")
Z95 = float(stats.norm.ppf(0.975))

@dataclass(frozen=True)
class RecoveryOptions:
    max_lag: int | None = None
    chase_lags: int | None = None
    flow_lags: int = 5
    fit_kernel: bool = True

@dataclass(frozen=True, eq=False)
class RecoveryReport:
    runs: pd.DataFrame
    summary: pd.DataFrame

def _row(seed: int, estimator: str, parameter: str, truth: float, estimate: float, se: float) -> dict[str, Any]:
    covered = bool(abs(estimate - truth) <= Z95 * se) if np.isfinite(se) and np.isfinite(truth) else False
    pvalue = float(2.0 * stats.norm.sf(abs(estimate / se))) if np.isfinite(se) and se > 0 else float("nan")
    return {
        "seed": seed,
        "estimator": estimator,
        "parameter": parameter,
        "truth": truth,
        "estimate": estimate,
        "se": se,
        "covered": covered,
        "pvalue": pvalue,
    }

def run_estimators(config: SimConfig, estimators: Sequence[str], options: RecoveryOptions) -> list[dict[str, Any]]:
    """Simulate one seed and run each estimator against its truth."""
    panel, _ = generate(config)
    params = sim_params(config)
    max_lag = options.max_lag or config.max_lag
    chase_lags = options.chase_lags if options.chase_lags is not None else config.chase_lags
    seed = config.seed
    rows: list[dict[str, Any]] = []
    for name in estimators:
        if name == "impact":
            fit = estimate_fund_impact(panel, params, flow_lags=options.flow_lags)
            rows.append(_row(seed, name, "theta", params.contemporaneous, fit.coefficient("x_impact"), fit.stderr("x_impact")))
        elif name == "reversal":
            result = estimate_reversal(panel, params, max_lag=max_lag, fit_kernel=options.fit_kernel)
            truth = long_run_impact(replace(params, max_lag=max_lag), horizon=max_lag)
            last = result.cumulative.iloc[-1]
            rows.append(_row(seed, name, f"cum_lag{max_lag}", truth, float(last["cum_coef"]), float(last["cum_se"])))
            if result.kernel is not None and params.decay is not None:
                for parameter, value in zip(result.kernel.names, params.decay):
                    rows.append(_row(seed, name, parameter, value, result.kernel.value(parameter), result.kernel.se(parameter)))
        elif name == "kernel":
            result = estimate_chasing_kernel(panel, lags=chase_lags, flow_lags=options.flow_lags, fit_kernel=options.fit_kernel)
            if result.kernel is not None:
                for parameter, value in zip(result.kernel.names, (config.chase_beta, config.chase_lambda)):
                    rows.append(_row(seed, name, parameter, value, result.kernel.value(parameter), result.kernel.se(parameter)))
        elif name == "chasing":
            decomposed = decompose(panel, params, config.chase_lambda, chase_lags)
            result = chasing_regression(decomposed, flow_lags=options.flow_lags)
            beta1_truth = config.chase_beta if config.chase_mode == "observed" else 0.0
            fit = result.decomposed
            if np.isfinite(result.beta1):
                rows.append(_row(seed, name, "beta1", beta1_truth, result.beta1, fit.stderr("impact_w")))
            rows.append(_row(seed, name, "beta2", config.chase_beta, result.beta2, fit.stderr("fund_w")))
            equality = _row(seed, name, "beta1_eq_beta2", float("nan"), result.wald_stat, float("nan"))
            equality["pvalue"] = result.wald_pvalue
            rows.append(equality)
        else:
            raise InputValidationError(f"unknown estimator {name!r}; choose from {ESTIMATORS}")
    return rows

def _run_seed(job: tuple[SimConfig, tuple[str, ...], RecoveryOptions]) -> list[dict[str, Any]]:
    config, estimators, options = job
    try:
        return run_estimators(config, estimators, options)
    except EstimationError as exc:
        raise EstimationError(f"seed {config.seed}: {exc}", {"seed": config.seed, **exc.diagnostics}) from exc

def summarize_runs(runs: pd.DataFrame) -> pd.DataFrame:
    """Bias, 95% CI coverage and 5% rejection rate per (estimator, parameter)."""
    if runs.empty:
        return pd.DataFrame(
            columns=["estimator", "parameter", "n_runs", "truth", "mean", "median", "bias", "rel_bias", "coverage", "rejection_rate"]
        )
    records = []
    for (estimator, parameter), group in runs.groupby(["estimator", "parameter"], sort=True):
        truth = float(group["truth"].iloc[0])
        mean = float(group["estimate"].mean())
        bias = mean - truth
        pvalues = group["pvalue"].dropna()
        records.append(
            {
                "estimator": estimator,
                "parameter": parameter,
                "n_runs": int(len(group)),
                "truth": truth,
                "mean": mean,
                "median": float(group["estimate"].median()),
                "bias": bias,
                "rel_bias": bias / abs(truth) if np.isfinite(truth) and truth != 0 else float("nan"),
                "coverage": float(group["covered"].mean()) if np.isfinite(truth) else float("nan"),
                "rejection_rate": float((pvalues < 0.05).mean()) if len(pvalues) else float("nan"),
            }
        )
    return pd.DataFrame.from_records(records)

def recovery_suite(
    config: SimConfig,
    estimators: Iterable[str] = ("impact",),
    seeds: Iterable[int] = range(50),
    *,
    threads: int | None = None,
    options: RecoveryOptions | None = None,
    logger_name: str = "flowlab.recovery",
) -> RecoveryReport:
    """Re-simulate per seed and report estimator bias, coverage and rejection rates; rows ordered by seed."""
    estimators = tuple(estimators)
    unknown = [name for name in estimators if name not in ESTIMATORS]
    if unknown:
        raise InputValidationError(f"unknown estimator(s) {unknown}; choose from {ESTIMATORS}")
    seeds = sorted(set(int(seed) for seed in seeds))
    if not seeds:
        raise InputValidationError("recovery needs at least one seed")
    options = options or RecoveryOptions()
    threads = threads or threads_from_env()
    logger = setup_logger(logger_name)
    logger.info("recovery_start", extra={"n_seeds": len(seeds), "estimators": list(estimators), "threads": threads})

    jobs = [(replace(config, seed=seed).validate(), estimators, options) for seed in seeds]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(_run_seed, jobs))
    else:
        results = [_run_seed(job) for job in jobs]

    runs = pd.DataFrame.from_records([row for rows in results for row in rows], columns=list(RUN_COLUMNS))
    summary = summarize_runs(runs)
    logger.info("recovery_end", extra={"n_rows": int(len(runs))})
    return RecoveryReport(runs=runs, summary=summary)
