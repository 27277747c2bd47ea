from __future__ import annotations

from pathlib import Path

SECURITIES_FILE = "securities.csv"
FUNDS_FILE = "funds.csv"
HOLDINGS_FILE = "holdings.csv"
TRUTH_FILE = "truth.csv"

VALIDATION_FILE = "validation.json"
EXCEPTIONS_FILE = "exceptions.csv"
RUN_SUMMARY_FILE = "run_summary.json"

def panel_files(panel_dir: str | Path) -> dict[str, Path]:
    root = Path(panel_dir)
    return {
        "securities": root / SECURITIES_FILE,
        "funds": root / FUNDS_FILE,
        "holdings": root / HOLDINGS_FILE,
    }

def truth_file(panel_dir: str | Path) -> Path:
    return Path(panel_dir) / TRUTH_FILE

def output_dir(out: str | Path) -> Path:
    target = Path(out)
    if target.suffix.lower() in {".csv", ".json"}:
        return target.parent
    return target

MEASURES_FILE = "measures.csv"
POSITIONS_FILE = "positions.csv"
CONC_VS_SIZE_FILE = "conc_vs_size.csv"
IMPACT_SERIES_FILE = "impact_series.csv"
AIT_FILE = "ait.csv"
DECOMPOSED_FILE = "decomposed.csv"
VARIANCE_SHARE_FILE = "variance_share.csv"
VARIANCE_CELLS_FILE = "variance_cells.csv"
CASE_STUDY_FILE = "cumulative_impact.csv"
CHASE_FIT_FILE = "chase_fit.json"
PONZI_SERIES_FILE = "ponzi_series.csv"
PONZI_RATIO_FILE = "ponzi_ratio.csv"
REALLOCATION_FILE = "reallocation.csv"
DECILE_SORT_FILE = "decile_sort.csv"
DECILE_STATS_FILE = "decile_stats.csv"
BUBBLE_EVENTS_FILE = "bubble_events.csv"
BUBBLE_WINDOW_FILE = "bubbles_event_window.csv"
SUMMARY_FILE = "summary.csv"
RECOVERY_RUNS_FILE = "recovery_runs.csv"
RECOVERY_SUMMARY_FILE = "recovery_summary.csv"

def fit_file(name: str) -> str:
    return f"{name}_fit.json"

def cumulative_file(name: str) -> str:
    return f"{name}_cumulative.csv"
