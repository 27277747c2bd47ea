from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

import pandas as pd

from . import paths
from .analytics import BubbleResult, ChasingResult, DecomposedReturns, PonziSeries, SortResult
from .econometrics import RegressionFit
from .estimate import LagModelResult
from .illiquidity import LiquidityMeasures
from .impact import AitSeries, ImpactSeries
from .recovery import RecoveryReport
from .utils.io import ensure_dir, write_csv, write_json

def _sorted(frame: pd.DataFrame, keys: list[str]) -> pd.DataFrame:
    present = [key for key in keys if key in frame.columns]
    if not present:
        return frame
    return frame.sort_values(present, kind="mergesort").reset_index(drop=True)

def publish_measures(measures: LiquidityMeasures, out_dir: str | Path) -> dict[str, Path]:
    root = ensure_dir(out_dir)
    funds = _sorted(measures.funds_frame(), ["date", "fund_id"])
    return {
        "measures": write_csv(root / paths.MEASURES_FILE, funds),
        "positions": write_csv(root / paths.POSITIONS_FILE, _sorted(measures.positions_frame(), ["date", "fund_id", "security_id"])),
        "conc_vs_size": write_csv(root / paths.CONC_VS_SIZE_FILE, funds[["date", "fund_id", "fund_conc", "fund_size", "fund_illiq"]]),
    }

def publish_impact(series: ImpactSeries, out_dir: str | Path, ait: AitSeries | None = None) -> dict[str, Path]:
    root = ensure_dir(out_dir)
    out = {"impact_series": write_csv(root / paths.IMPACT_SERIES_FILE, series.frame())}
    if ait is not None:
        out["ait"] = write_csv(root / paths.AIT_FILE, _sorted(ait.frame(), ["date", "security_id"]))
    return out

def publish_fit(name: str, fit: RegressionFit | Mapping[str, RegressionFit], out_dir: str | Path) -> Path:
    """One fit, or a named family of fits (horse races), as a JSON document."""
    if isinstance(fit, RegressionFit):
        payload: dict[str, Any] = fit.to_dict()
    else:
        payload = {"schema_version": 1, "fits": {key: value.to_dict() for key, value in fit.items()}}
    return write_json(Path(out_dir) / paths.fit_file(name), payload)

def publish_lag_model(name: str, result: LagModelResult, out_dir: str | Path) -> dict[str, Path]:
    root = ensure_dir(out_dir)
    cumulative = result.cumulative.copy()
    if result.kernel is not None:
        fitted = result.kernel.cumulative(int(cumulative["lag"].max()))
        cumulative = cumulative.merge(
            fitted.rename(columns={"coef": "kernel_coef", "cum_coef": "kernel_cum_coef"}), on="lag", how="left"
        )
    return {
        "fit": write_json(root / paths.fit_file(name), result.to_dict()),
        "cumulative": write_csv(root / paths.cumulative_file(name), cumulative),
    }

def publish_decomposed(
    decomposed: DecomposedReturns,
    out_dir: str | Path,
    shares: pd.DataFrame | None = None,
    cells: pd.DataFrame | None = None,
) -> dict[str, Path]:
    root = ensure_dir(out_dir)
    out = {"decomposed": write_csv(root / paths.DECOMPOSED_FILE, decomposed.frame())}
    if shares is not None:
        out["variance_share"] = write_csv(root / paths.VARIANCE_SHARE_FILE, _sorted(shares, ["fund_id"]))
    if cells is not None:
        out["variance_cells"] = write_csv(root / paths.VARIANCE_CELLS_FILE, cells)
    return out

def publish_case_study(frame: pd.DataFrame, correlation: float, out_dir: str | Path) -> Path:
    frame = frame.assign(correlation=correlation)
    return write_csv(Path(out_dir) / paths.CASE_STUDY_FILE, frame)

def publish_chasing(results: Mapping[str, ChasingResult], out_dir: str | Path) -> Path:
    payload = {"schema_version": 1, "samples": {name: result.to_dict() for name, result in results.items()}}
    return write_json(Path(out_dir) / paths.CHASE_FIT_FILE, payload)

def publish_ponzi(series: PonziSeries, out_dir: str | Path) -> dict[str, Path]:
    root = ensure_dir(out_dir)
    daily = series.daily_frame()
    ratio_columns = ["date", *[column for column in daily.columns if column.startswith("ratio_")]]
    return {
        "ponzi_series": write_csv(root / paths.PONZI_SERIES_FILE, series.fund_frame()),
        "ponzi_ratio": write_csv(root / paths.PONZI_RATIO_FILE, daily[ratio_columns]),
        "reallocation": write_csv(root / paths.REALLOCATION_FILE, daily[["date", "reallocation", "cum_reallocation"]]),
    }

def publish_sort(result: SortResult, out_dir: str | Path) -> dict[str, Path]:
    root = ensure_dir(out_dir)
    return {
        "decile_sort": write_csv(root / paths.DECILE_SORT_FILE, _sorted(result.table, ["group", "decile"])),
        "decile_stats": write_csv(root / paths.DECILE_STATS_FILE, _sorted(result.stats, ["group"])),
    }

def publish_bubbles(result: BubbleResult, out_dir: str | Path) -> dict[str, Path]:
    root = ensure_dir(out_dir)
    return {
        "bubble_events": write_csv(root / paths.BUBBLE_EVENTS_FILE, result.events),
        "bubbles_event_window": write_csv(root / paths.BUBBLE_WINDOW_FILE, result.window),
    }

def publish_summary(table: pd.DataFrame, out_dir: str | Path) -> Path:
    return write_csv(Path(out_dir) / paths.SUMMARY_FILE, table)

def publish_recovery(report: RecoveryReport, out_dir: str | Path) -> dict[str, Path]:
    root = ensure_dir(out_dir)
    return {
        "recovery_runs": write_csv(root / paths.RECOVERY_RUNS_FILE, _sorted(report.runs, ["seed", "estimator", "parameter"])),
        "recovery_summary": write_csv(root / paths.RECOVERY_SUMMARY_FILE, report.summary),
    }
