from __future__ import annotations

from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable

UTC = timezone.utc  # same object as datetime.UTC (3.11+)

import pandas as pd

from ..errors import InputValidationError, PanelIOError

def parse_date(value: str) -> date:
    try:
        return date.fromisoformat(value)
    except ValueError as exc:
        raise InputValidationError(f"Invalid ISO-8601 date: {value!r}") from exc

def now_utc() -> datetime:
    return datetime.now(UTC)

def business_calendar(dates: Iterable[object]) -> pd.DatetimeIndex:
    """Sorted, unique, normalized date axis."""
    index = pd.DatetimeIndex(pd.to_datetime(list(dates))).normalize()
    return index.unique().sort_values()

def load_calendar(path: str | Path) -> pd.DatetimeIndex:
    """Read a calendar file: one ISO date per line, or a CSV with a `date` column."""
    target = Path(path)
    if not target.exists():
        raise PanelIOError(f"Calendar file not found: {target}")
    lines = [line.strip() for line in target.read_text(encoding="utf-8").splitlines()]
    lines = [line for line in lines if line and not line.startswith("#")]
    if lines and lines[0].split(",")[0] == "date":
        lines = [line.split(",")[0] for line in lines[1:]]
    return business_calendar(parse_date(line) for line in lines)

def weekday_calendar(start: str, periods: int) -> pd.DatetimeIndex:
    return pd.bdate_range(start=start, periods=periods)
