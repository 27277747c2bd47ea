from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import pandas as pd

from ..errors import InputValidationError, PanelIOError

# Round-trip safe for IEEE doubles.
FLOAT_FORMAT = "%.17g"

def ensure_dir(path: str | Path) -> Path:
    target = Path(path)
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PanelIOError(f"Cannot create directory {target}: {exc}") from exc
    return target

def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (pd.Timestamp,)):
        return value.strftime("%Y-%m-%d")
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")

def write_json(path: str | Path, payload: Any) -> Path:
    target = Path(path)
    ensure_dir(target.parent)
    text = json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
    try:
        target.write_text(text + "\n", encoding="utf-8")
    except OSError as exc:
        raise PanelIOError(f"Cannot write {target}: {exc}") from exc
    return target

def write_csv(path: str | Path, frame: pd.DataFrame) -> Path:
    target = Path(path)
    ensure_dir(target.parent)
    try:
        frame.to_csv(
            target,
            index=False,
            float_format=FLOAT_FORMAT,
            date_format="%Y-%m-%d",
            lineterminator="\n",
        )
    except OSError as exc:
        raise PanelIOError(f"Cannot write {target}: {exc}") from exc
    return target

def read_csv_checked(path: str | Path, required: Iterable[str]) -> pd.DataFrame:
    """Read a UTF-8 CSV and fail with the file and column name when a column is missing."""
    target = Path(path)
    if not target.exists():
        raise PanelIOError(f"Input file not found: {target}")
    try:
        frame = pd.read_csv(target, encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise PanelIOError(f"Cannot read {target}: {exc}") from exc
    except pd.errors.EmptyDataError as exc:
        raise InputValidationError(f"{target.name}: file is empty") from exc
    for column in required:
        if column not in frame.columns:
            raise InputValidationError(f"{target.name}: missing required column '{column}'")
    return frame
