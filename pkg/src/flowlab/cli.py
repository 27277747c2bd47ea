from __future__ import annotations

import argparse
from dataclasses import replace
from typing import Any, Callable, Sequence

import numpy as np

from .analytics import (
    chasing_by_sample,
    chasing_regression,
    cumulative_impact,
    decompose,
    flow_decile_sort,
    ponzi_series,
    runup_and_bubble,
    variance_share_cells,
    variance_shares,
)
from .analytics.ponzi import PonziSeries
from .analytics.sorts import SORT_KEYS
from .config import (
    AGGREGATIONS,
    EXPOSURES,
    RANKING_WINDOWS,
    SAMPLES,
    SUPPLIES,
    RunConfig,
    SimConfig,
    threads_from_env,
)
from .errors import FlowlabError
from .estimate import (
    ait_horse_race,
    estimate_ait,
    estimate_chasing_kernel,
    estimate_fund_impact,
    estimate_reversal,
    estimate_stock_impact,
    fund_horse_race,
    parse_clusters,
    parse_fe,
)
from .illiquidity import LiquidityMeasures, liquidity_measures
from .impact import ait_series, creation_baskets, impact_series, load_baskets
from .model import MarketPanel
from .paths import output_dir
from .pipeline import illiquidity_settings, impact_params, prepare_panel, run_pipeline
from .publish import (
    publish_bubbles,
    publish_case_study,
    publish_chasing,
    publish_decomposed,
    publish_fit,
    publish_impact,
    publish_lag_model,
    publish_measures,
    publish_ponzi,
    publish_recovery,
    publish_sort,
    publish_summary,
)
from .recovery import RecoveryOptions, recovery_suite
from .simulate import generate, write_simulation
from .summary import summarize
from .utils.log import setup_logger

# per-level defaults for estimate-impact
LEVEL_DEFAULTS = {
    "fund": ("fund,time", "day,fund"),
    "stock": ("fund-time", "day,stockday"),
    "ait": ("time,stock", "day,stock"),
}

def _decay(value: str) -> tuple[float, float, float]:
    parts = [part.strip() for part in value.split(",")]
    try:
        triple = tuple(float(part) for part in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"decay must be theta0,theta1,lambda_theta, got {value!r}") from exc
    if len(triple) != 3:
        raise argparse.ArgumentTypeError(f"decay must have three values, got {value!r}")
    return triple  # type: ignore[return-value]

def _run_options() -> argparse.ArgumentParser:
    """RunConfig overrides shared by every panel subcommand; unset flags keep the config value."""
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--panel", dest="panel_dir", type=str, default=None, help="Panel directory (three CSVs)")
    p.add_argument("--out", dest="out_dir", type=str, default=None, help="Output directory")
    p.add_argument("--run-config", type=str, default="", help="JSON file with RunConfig defaults")
    p.add_argument("--calendar", dest="calendar_path", type=str, default=None, help="Business-day calendar file")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--decay", type=_decay, default=None, help="theta0,theta1,lambda_theta")
    p.add_argument("--max-lag", type=int, default=None)
    p.add_argument("--exposure", choices=EXPOSURES, default=None)
    p.add_argument("--supply", choices=SUPPLIES, default=None)
    p.add_argument("--no-vol-prefactor", dest="vol_prefactor", action="store_false", default=None)
    p.add_argument("--aggregation", choices=AGGREGATIONS, default=None)
    p.add_argument("--lambda-beta", type=float, default=None)
    p.add_argument("--chase-lags", type=int, default=None)
    p.add_argument("--chase-flow-lags", type=int, default=None)
    p.add_argument("--impact-flow-lags", type=int, default=None)
    p.add_argument("--fe-tol", type=float, default=None)
    p.add_argument("--winsorize", action="store_true", default=None)
    p.add_argument("--winsor-lower", type=float, default=None)
    p.add_argument("--winsor-upper", type=float, default=None)
    p.add_argument("--sample", choices=SAMPLES, default=None)
    p.add_argument("--min-aum", type=float, default=None)
    p.add_argument("--top-liquidity-n", type=int, default=None)
    return p

def _beta_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--beta1", type=float, default=None, help="Ponzi-flow loading; estimated when omitted")
    p.add_argument("--split-beta", action="store_true", help="Use separate active/passive loadings")
    return p

def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    p = argparse.ArgumentParser(prog="flowlab", description="Fund illiquidity, flow-driven price impact and Ponzi-flow analytics")
    sub = p.add_subparsers(dest="cmd", required=True)
    common = _run_options()
    beta = _beta_options()

    sim = sub.add_parser("simulate", help="Generate a synthetic panel with ground truth")
    sim.add_argument("--config", type=str, default="", help="Simulation key = value file")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out", type=str, default="data/panel")

    sub.add_parser("illiquidity", parents=[common], help="Fund illiquidity, concentration and size")

    imp = sub.add_parser("impact", parents=[common], help="Self-inflated and total impact series, AIT")
    imp.add_argument("--baskets", dest="baskets_path", type=str, default=None)

    est = sub.add_parser("estimate-impact", parents=[common], help="Price-impact panel regressions")
    est.add_argument("--level", choices=sorted(LEVEL_DEFAULTS), default="fund")
    est.add_argument("--fe", type=str, default=None)
    est.add_argument("--cluster", type=str, default=None)
    est.add_argument("--triple-difference", action="store_true")
    est.add_argument("--horse-race", action="store_true")
    est.add_argument("--ait-regressors", type=str, default="ait_hat")
    est.add_argument("--baskets", dest="baskets_path", type=str, default=None)

    rev = sub.add_parser("estimate-reversal", parents=[common], help="Impact reversal distributed lag and decay kernel")
    rev.add_argument("--regressor", choices=("fund", "ait"), default="fund")
    rev.add_argument("--no-kernel", dest="fit_kernel", action="store_false")
    rev.add_argument("--baskets", dest="baskets_path", type=str, default=None)

    ker = sub.add_parser("estimate-kernel", parents=[common], help="Return-chasing distributed lag and decay kernel")
    ker.add_argument("--lags", dest="chase_lags", type=int, default=None)
    ker.add_argument("--no-kernel", dest="fit_kernel", action="store_false")
    ker.add_argument("--fe", type=str, default="time")
    ker.add_argument("--cluster", type=str, default="day,fund")

    dec = sub.add_parser("decompose", parents=[common], help="R = R^I + R^perp and variance shares")
    dec.add_argument("--case-fund", type=str, default=None, help="Fund id for cumulative impact tracking")

    cha = sub.add_parser("chase", parents=[common], help="Decomposed return-chasing regression")
    cha.add_argument("--by-sample", action="store_true", help="Also fit active-only and passive-only samples")

    sub.add_parser("ponzi", parents=[common, beta], help="Ponzi flows, volume ratio and wealth reallocation")

    srt = sub.add_parser("sort", parents=[common], help="Flow-decile portfolio sort by illiquidity group")
    srt.add_argument("--illiq-split", type=float, default=0.9)
    srt.add_argument("--sort-key", choices=SORT_KEYS, default="flow")

    bub = sub.add_parser("bubbles", parents=[common, beta], help="Run-up events and Ponzi-flow bubbles")
    bub.add_argument("--runup", type=float, default=0.5)
    bub.add_argument("--window", type=int, default=504)
    bub.add_argument("--top", type=float, default=0.10)
    bub.add_argument("--post", type=int, default=None)
    bub.add_argument("--balanced", action="store_true")
    bub.add_argument("--ranking-window", choices=RANKING_WINDOWS, default="runup")

    sub.add_parser("summarize", parents=[common], help="Panel summary statistics")

    rec = sub.add_parser("recovery", help="Monte Carlo parameter recovery over seeds")
    rec.add_argument("--config", type=str, default="")
    rec.add_argument("--seed", type=int, default=None, help="First seed (default: config seed)")
    rec.add_argument("--seeds", type=int, default=50, help="Number of seeds")
    rec.add_argument("--estimators", type=str, default="impact")
    rec.add_argument("--threads", type=int, default=None)
    rec.add_argument("--max-lag", type=int, default=None)
    rec.add_argument("--flow-lags", type=int, default=5)
    rec.add_argument("--no-kernel", dest="fit_kernel", action="store_false")
    rec.add_argument("--out", type=str, default="data/recovery")

    pipe = sub.add_parser("pipeline", parents=[common], help="simulate (optional) -> ... -> bubbles with a run summary")
    pipe.add_argument("--config", type=str, default="", help="Simulate first with this key = value file")
    pipe.add_argument("--seed", type=int, default=None)

    return p.parse_args(argv)

def _run_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig.load(args.run_config)
    names = (
        "panel_dir", "out_dir", "calendar_path", "eta", "theta", "decay", "max_lag", "exposure", "supply",
        "vol_prefactor", "aggregation", "lambda_beta", "chase_lags", "chase_flow_lags", "impact_flow_lags",
        "fe_tol", "winsorize", "winsor_lower", "winsor_upper", "sample", "min_aum", "top_liquidity_n",
        "baskets_path",
    )
    return config.override(subcommand=args.cmd, **{name: getattr(args, name, None) for name in names})

def _sim_config(path: str, seed: int | None) -> SimConfig:
    config = SimConfig.load(path) if path else SimConfig()
    if seed is not None:
        config = replace(config, seed=seed)
    return config.validate()

def _load(config: RunConfig) -> tuple[MarketPanel, LiquidityMeasures]:
    panel = prepare_panel(config, report_dir=output_dir(config.out_dir))
    return panel, liquidity_measures(panel, illiquidity_settings(config))

def _baskets(panel: MarketPanel, config: RunConfig) -> np.ndarray | None:
    if not config.baskets_path:
        return None
    return creation_baskets(panel, load_baskets(config.baskets_path))

def _ponzi(args: argparse.Namespace, config: RunConfig, panel: MarketPanel, measures: LiquidityMeasures) -> PonziSeries:
    params = impact_params(config)
    decomposed = decompose(panel, params, config.lambda_beta, config.chase_lags, exposure=config.exposure, measures=measures)
    beta1: Any = args.beta1
    if beta1 is None:
        if args.split_beta:
            fits = chasing_by_sample(decomposed, flow_lags=config.chase_flow_lags)
            pooled = fits["all"].beta1
            beta1 = {tag: fits[tag].beta1 if tag in fits else pooled for tag in ("active", "passive")}
            beta1 = {tag: value if np.isfinite(value) else 0.0 for tag, value in beta1.items()}
        else:
            estimated = chasing_regression(decomposed, flow_lags=config.chase_flow_lags).beta1
            beta1 = estimated if np.isfinite(estimated) else 0.0
    return ponzi_series(decomposed, beta1, measures.fund_illiq_direct, params, theta=config.theta)

def cmd_simulate(args: argparse.Namespace) -> int:
    config = _sim_config(args.config, args.seed)
    panel, truth = generate(config)
    write_simulation(panel, truth, args.out)
    return 0

def cmd_illiquidity(args: argparse.Namespace, config: RunConfig) -> int:
    _, measures = _load(config)
    publish_measures(measures, output_dir(config.out_dir))
    return 0

def cmd_impact(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    series = impact_series(panel, impact_params(config), exposure=config.exposure, measures=measures)
    publish_impact(series, output_dir(config.out_dir), ait=ait_series(panel, _baskets(panel, config)))
    return 0

def cmd_estimate_impact(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    out = output_dir(config.out_dir)
    params = impact_params(config)
    fe_default, cluster_default = LEVEL_DEFAULTS[args.level]
    fe = parse_fe(args.fe or fe_default)
    cluster = parse_clusters(args.cluster or cluster_default)
    if args.level == "fund":
        if args.horse_race:
            publish_fit("fund_horse_race", fund_horse_race(panel, params, fe=fe, cluster=cluster, measures=measures, fe_tol=config.fe_tol), out)
        fit = estimate_fund_impact(
            panel, params, fe=fe, cluster=cluster, flow_lags=config.impact_flow_lags, measures=measures, fe_tol=config.fe_tol
        )
        publish_fit("fund_impact", fit, out)
    elif args.level == "stock":
        fit = estimate_stock_impact(
            panel, params, fe=fe, cluster=cluster, triple_difference=args.triple_difference, measures=measures, fe_tol=config.fe_tol
        )
        publish_fit("stock_impact", fit, out)
    else:
        baskets = _baskets(panel, config)
        if args.horse_race:
            publish_fit("ait_horse_race", ait_horse_race(panel, baskets, fe=fe, cluster=cluster, fe_tol=config.fe_tol), out)
        regressors = tuple(part.strip() for part in args.ait_regressors.split(",") if part.strip())
        fit = estimate_ait(panel, regressors=regressors, fe=fe, cluster=cluster, baskets=baskets, fe_tol=config.fe_tol)
        publish_fit("ait_impact", fit, out)
    return 0

def cmd_estimate_reversal(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    result = estimate_reversal(
        panel,
        impact_params(config),
        max_lag=config.max_lag,
        regressor=args.regressor,
        fit_kernel=args.fit_kernel,
        measures=measures,
        baskets=_baskets(panel, config),
        fe_tol=config.fe_tol,
    )
    publish_lag_model("reversal" if args.regressor == "fund" else "ait_reversal", result, output_dir(config.out_dir))
    return 0

def cmd_estimate_kernel(args: argparse.Namespace, config: RunConfig) -> int:
    panel, _ = _load(config)
    result = estimate_chasing_kernel(
        panel,
        lags=config.chase_lags,
        flow_lags=config.chase_flow_lags,
        fit_kernel=args.fit_kernel,
        fe=parse_fe(args.fe),
        cluster=parse_clusters(args.cluster),
        fe_tol=config.fe_tol,
    )
    publish_lag_model("chasing", result, output_dir(config.out_dir))
    return 0

def cmd_decompose(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    out = output_dir(config.out_dir)
    decomposed = decompose(
        panel, impact_params(config), config.lambda_beta, config.chase_lags, exposure=config.exposure, measures=measures
    )
    shares = variance_shares(decomposed, measures)
    publish_decomposed(decomposed, out, shares=shares, cells=variance_share_cells(shares))
    if args.case_fund is not None:
        frame, correlation = cumulative_impact(decomposed, args.case_fund)
        publish_case_study(frame, correlation, out)
    return 0

def cmd_chase(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    decomposed = decompose(
        panel, impact_params(config), config.lambda_beta, config.chase_lags, exposure=config.exposure, measures=measures
    )
    if args.by_sample:
        results = chasing_by_sample(decomposed, flow_lags=config.chase_flow_lags)
    else:
        results = {config.sample: chasing_regression(decomposed, flow_lags=config.chase_flow_lags)}
    publish_chasing(results, output_dir(config.out_dir))
    return 0

def cmd_ponzi(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    publish_ponzi(_ponzi(args, config, panel, measures), output_dir(config.out_dir))
    return 0

def cmd_sort(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    result = flow_decile_sort(panel, measures, illiq_split=args.illiq_split, sort_key=args.sort_key)
    publish_sort(result, output_dir(config.out_dir))
    return 0

def cmd_bubbles(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    series = _ponzi(args, config, panel, measures)
    result = runup_and_bubble(
        panel,
        series.ponzi_flow,
        args.runup,
        args.window,
        args.top,
        post=args.post,
        balanced=args.balanced,
        ranking_window=args.ranking_window,
    )
    publish_bubbles(result, output_dir(config.out_dir))
    return 0

def cmd_summarize(args: argparse.Namespace, config: RunConfig) -> int:
    panel, measures = _load(config)
    publish_summary(summarize(panel, measures), output_dir(config.out_dir))
    return 0

def cmd_recovery(args: argparse.Namespace) -> int:
    config = _sim_config(args.config, None)
    start = config.seed if args.seed is None else args.seed
    estimators = tuple(part.strip() for part in args.estimators.split(",") if part.strip())
    report = recovery_suite(
        config,
        estimators,
        range(start, start + args.seeds),
        threads=args.threads or threads_from_env(),
        options=RecoveryOptions(max_lag=args.max_lag, flow_lags=args.flow_lags, fit_kernel=args.fit_kernel),
    )
    publish_recovery(report, args.out)
    return 0

def cmd_pipeline(args: argparse.Namespace, config: RunConfig) -> int:
    sim_config = _sim_config(args.config, args.seed) if args.config or args.seed is not None else None
    run_pipeline(config, sim_config)
    return 0

PANEL_COMMANDS: dict[str, Callable[[argparse.Namespace, RunConfig], int]] = {
    "illiquidity": cmd_illiquidity,
    "impact": cmd_impact,
    "estimate-impact": cmd_estimate_impact,
    "estimate-reversal": cmd_estimate_reversal,
    "estimate-kernel": cmd_estimate_kernel,
    "decompose": cmd_decompose,
    "chase": cmd_chase,
    "ponzi": cmd_ponzi,
    "sort": cmd_sort,
    "bubbles": cmd_bubbles,
    "summarize": cmd_summarize,
    "pipeline": cmd_pipeline,
}

def run(argv: Sequence[str] | None = None) -> int:
    """Parse, dispatch and map errors to exit codes (2 input, 3 estimation, 4 I/O, 1 anything else)."""
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    logger = setup_logger("flowlab.cli")
    logger.info("command_start", extra={"command": args.cmd})
    try:
        if args.cmd == "simulate":
            code = cmd_simulate(args)
        elif args.cmd == "recovery":
            code = cmd_recovery(args)
        else:
            code = PANEL_COMMANDS[args.cmd](args, _run_config(args))
    except FlowlabError as exc:
        extra: dict[str, Any] = {"command": args.cmd, "error": str(exc), "exit_code": exc.exit_code}
        diagnostics = getattr(exc, "diagnostics", None)
        if diagnostics:
            extra["diagnostics"] = diagnostics
        logger.error("command_failed", extra=extra)
        return exc.exit_code
    except Exception as exc:
        logger.exception(
            "command_failed",
            extra={"command": args.cmd, "error": str(exc), "error_type": type(exc).__name__, "exit_code": 1},
        )
        return 1
    logger.info("command_end", extra={"command": args.cmd, "exit_code": code})
    return code

def main() -> int:
    return run()

if __name__ == "__main__":
    raise SystemExit(main())
