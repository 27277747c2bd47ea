from __future__ import annotations

from pathlib import Path

import pandas as pd

from .model import FUND_COLUMNS, HOLDING_COLUMNS, SECURITY_COLUMNS, MarketPanel
from .paths import panel_files
from .transform import build_panel
from .utils.io import ensure_dir, read_csv_checked, write_csv
from .utils.log import setup_logger
from .utils.time import business_calendar, load_calendar
from .validate import validate_panel_frames

REQUIRED = {
    "securities": SECURITY_COLUMNS,
    "funds": FUND_COLUMNS,
    "holdings": HOLDING_COLUMNS,
}

def read_panel_frames(panel_dir: str | Path) -> dict[str, pd.DataFrame]:
    """Read the three panel CSVs with schema checks; dates parsed, ids kept as strings."""
    frames: dict[str, pd.DataFrame] = {}
    for name, path in panel_files(panel_dir).items():
        frame = read_csv_checked(path, REQUIRED[name])
        frame["date"] = pd.to_datetime(frame["date"]).dt.normalize()
        for key in ("fund_id", "security_id"):
            if key in frame.columns:
                frame[key] = frame[key].astype(str)
        frames[name] = frame
    return frames

def load_panel(
    panel_dir: str | Path,
    calendar_path: str | Path | None = None,
    report_dir: str | Path | None = None,
    logger_name: str = "flowlab.extract",
) -> MarketPanel:
    logger = setup_logger(logger_name)
    logger.info("panel_load_start", extra={"panel_dir": str(panel_dir)})
    frames = read_panel_frames(panel_dir)
    calendar = load_calendar(calendar_path) if calendar_path else None
    validate_panel_frames(frames, calendar=calendar, report_dir=report_dir)
    if calendar is None:
        calendar = business_calendar(pd.concat([frames["securities"]["date"], frames["funds"]["date"]]))
    panel = build_panel(frames["securities"], frames["funds"], frames["holdings"], calendar)
    logger.info("panel_loaded", extra={"panel_dir": str(panel_dir), "n_dates": int(len(panel.calendar))})
    return panel

def write_panel(panel: MarketPanel, panel_dir: str | Path) -> dict[str, Path]:
    """Write raw columns only; derived fields are recomputed on load."""
    ensure_dir(panel_dir)
    paths = panel_files(panel_dir)
    holdings = panel.holdings
    if "filled" in holdings.columns:
        holdings = holdings.loc[~holdings["filled"].astype(bool)]
    tables = {
        "securities": panel.securities.sort_values(["date", "security_id"], kind="mergesort"),
        "funds": panel.funds.sort_values(["date", "fund_id"], kind="mergesort"),
        "holdings": holdings.sort_values(["date", "fund_id", "security_id"], kind="mergesort"),
    }
    for name, frame in tables.items():
        write_csv(paths[name], frame.loc[:, list(REQUIRED[name])])
    return paths
