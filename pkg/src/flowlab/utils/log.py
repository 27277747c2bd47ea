from __future__ import annotations

import json
import logging
import os
import sys
from typing import Any

import numpy as np

from .time import now_utc

# Attributes every LogRecord carries; anything else came in through `extra=`.
_RECORD_FIELDS = frozenset(logging.LogRecord("", logging.INFO, "", 0, "", (), None).__dict__) | {"message", "asctime"}

def _plain(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)

class JsonFormatter(logging.Formatter):
    """One JSON object per line: ts, level, logger, event message and the `extra` context."""

    def format(self, record: logging.LogRecord) -> str:
        payload: dict[str, Any] = {
            "ts": now_utc().isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        payload.update(
            {key: value for key, value in record.__dict__.items() if key not in _RECORD_FIELDS and not key.startswith("_")}
        )
        if record.exc_info:
            payload["exc_info"] = self.formatException(record.exc_info)
        return json.dumps(payload, ensure_ascii=True, default=_plain)

def log_level(default: int = logging.INFO) -> int:
    """FLOWLAB_LOG_LEVEL by name (DEBUG, INFO, ...); unknown names fall back to `default`."""
    level = logging.getLevelName(os.environ.get("FLOWLAB_LOG_LEVEL", "").strip().upper() or default)
    return level if isinstance(level, int) else default

def setup_logger(name: str, level: int | None = None) -> logging.Logger:
    """JSON-lines logger on stderr; data never goes through it."""
    logger = logging.getLogger(name)
    logger.setLevel(log_level() if level is None else level)
    logger.propagate = False
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(JsonFormatter())
        logger.addHandler(handler)
    return logger
