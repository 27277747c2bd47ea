from __future__ import annotations

import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .analytics import chasing_regression, decompose, ponzi_series, runup_and_bubble
from .config import RunConfig, SimConfig
from .estimate import estimate_fund_impact
from .extract import load_panel
from .illiquidity import IlliquiditySettings, liquidity_measures
from .impact import ImpactParams
from .model import MarketPanel
from .paths import RUN_SUMMARY_FILE, output_dir
from .publish import publish_bubbles, publish_chasing, publish_decomposed, publish_fit, publish_measures, publish_ponzi
from .simulate import generate, write_simulation
from .transform import apply_sample_filters, winsorize_flows
from .utils.io import write_json
from .utils.log import setup_logger

def impact_params(config: RunConfig) -> ImpactParams:
    return ImpactParams(theta=config.theta, eta=config.eta, decay=config.decay, max_lag=config.max_lag)

def illiquidity_settings(config: RunConfig) -> IlliquiditySettings:
    return IlliquiditySettings(
        eta=config.eta,
        supply=config.supply,
        vol_prefactor=config.vol_prefactor,
        aggregation=config.aggregation,
    )

def prepare_panel(config: RunConfig, report_dir: str | Path | None = None) -> MarketPanel:
    """Load, then apply winsorization and sample filters as configured."""
    panel = load_panel(config.panel_dir, config.calendar_path or None, report_dir=report_dir)
    if config.winsorize:
        panel = winsorize_flows(panel, config.winsor_lower, config.winsor_upper)
    if config.sample != "all" or config.min_aum > 0 or config.top_liquidity_n:
        panel = apply_sample_filters(panel, config.sample, config.min_aum, config.top_liquidity_n)
    return panel

def _names(outputs: dict[str, Path] | Path) -> dict[str, str] | str:
    if isinstance(outputs, Path):
        return outputs.name
    return {key: value.name for key, value in outputs.items()}

def run_pipeline(
    config: RunConfig,
    sim_config: SimConfig | None = None,
    logger_name: str = "flowlab.pipeline",
) -> dict[str, Any]:
    """simulate (optional) -> load -> illiquidity -> estimate fund impact -> decompose -> chase -> ponzi -> bubbles."""
    logger = setup_logger(logger_name)
    out = output_dir(config.out_dir)
    stage_statuses: dict[str, str] = {}
    stage_outputs: dict[str, Any] = {}
    results: dict[str, Any] = {}
    state: dict[str, Any] = {}

    logger.info("pipeline_start", extra={"panel_dir": config.panel_dir, "out_dir": str(out), "simulate": sim_config is not None})

    def stage(name: str, body: Callable[[], Any]) -> None:
        start = time.monotonic()
        logger.info("stage_start", extra={"stage": name})
        try:
            produced = body()
        except Exception as exc:
            stage_statuses[name] = "failed"
            logger.error("pipeline_failed", extra={"stage": name}, exc_info=exc)
            raise
        stage_statuses[name] = "success"
        if produced is not None:
            stage_outputs[name] = _names(produced)
        logger.info("stage_end", extra={"stage": name, "duration_s": time.monotonic() - start})

    if sim_config is not None:
        def simulate() -> dict[str, Path]:
            panel, truth = generate(sim_config)
            return write_simulation(panel, truth, config.panel_dir)

        stage("simulate", simulate)

    def load() -> None:
        state["panel"] = prepare_panel(config, report_dir=out)

    def illiquidity() -> dict[str, Path]:
        state["measures"] = liquidity_measures(state["panel"], illiquidity_settings(config))
        return publish_measures(state["measures"], out)

    def estimate() -> Path:
        params = impact_params(config)
        fit = estimate_fund_impact(
            state["panel"], params, flow_lags=config.impact_flow_lags, measures=state["measures"], fe_tol=config.fe_tol
        )
        results["theta_hat"] = fit.coefficient("x_impact")
        results["theta_se"] = fit.stderr("x_impact")
        # a configured decay kernel fixes theta0; otherwise the estimate prices R^I
        state["params"] = params if params.decay is not None else replace(params, theta=results["theta_hat"])
        results["theta_used"] = state["params"].contemporaneous
        return publish_fit("fund_impact", fit, out)

    def decomposition() -> dict[str, Path]:
        state["decomposed"] = decompose(
            state["panel"],
            state["params"],
            config.lambda_beta,
            config.chase_lags,
            exposure=config.exposure,
            measures=state["measures"],
        )
        return publish_decomposed(state["decomposed"], out)

    def chase() -> Path:
        result = chasing_regression(state["decomposed"], flow_lags=config.chase_flow_lags, sample=config.sample)
        results["beta1"] = result.beta1
        results["beta2"] = result.beta2
        results["wald_pvalue"] = result.wald_pvalue
        state["beta1"] = result.beta1 if np.isfinite(result.beta1) else 0.0
        return publish_chasing({config.sample: result}, out)

    def ponzi() -> dict[str, Path]:
        state["ponzi"] = ponzi_series(
            state["decomposed"], state["beta1"], state["measures"].fund_illiq_direct, state["params"], theta=config.theta
        )
        return publish_ponzi(state["ponzi"], out)

    def bubbles() -> dict[str, Path]:
        result = runup_and_bubble(state["panel"], state["ponzi"].ponzi_flow)
        results["n_runup_events"] = int(len(result.events))
        results["n_bubble_events"] = int(result.events["is_bubble"].sum()) if len(result.events) else 0
        return publish_bubbles(result, out)

    stage("load", load)
    stage("illiquidity", illiquidity)
    stage("estimate_impact", estimate)
    stage("decompose", decomposition)
    stage("chase", chase)
    stage("ponzi", ponzi)
    stage("bubbles", bubbles)

    run_summary = {
        "schema_version": 1,
        "status": "pass",
        "panel_dir": str(config.panel_dir),
        "stage_statuses": stage_statuses,
        "outputs": stage_outputs,
        "results": results,
        "config": {key: value for key, value in vars(config).items() if key not in {"panel_dir", "out_dir"}},
    }
    summary_path = write_json(out / RUN_SUMMARY_FILE, run_summary)
    logger.info("pipeline_end", extra={"status": "pass", "run_summary": str(summary_path)})
    return {"status": "pass", "stage_statuses": stage_statuses, "results": results, "run_summary_path": summary_path}
