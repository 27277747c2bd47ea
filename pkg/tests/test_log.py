from __future__ import annotations

import json
import logging

import numpy as np

from flowlab.utils.log import JsonFormatter, log_level, setup_logger


def _record(**extra) -> logging.LogRecord:
    record = logging.LogRecord("flowlab.test", logging.WARNING, __file__, 1, "fit_end", (), None)
    record.__dict__.update(extra)
    return record


def test_formatter_emits_event_and_context():
    payload = json.loads(JsonFormatter().format(_record(n_obs=np.int64(12), beta=np.float64(0.5), stage="chase")))
    assert payload["message"] == "fit_end"
    assert payload["level"] == "WARNING"
    assert payload["logger"] == "flowlab.test"
    assert (payload["n_obs"], payload["beta"], payload["stage"]) == (12, 0.5, "chase")
    assert "lineno" not in payload
    assert "ts" in payload


def test_log_level_from_env(monkeypatch):
    monkeypatch.delenv("FLOWLAB_LOG_LEVEL", raising=False)
    assert log_level() == logging.INFO
    monkeypatch.setenv("FLOWLAB_LOG_LEVEL", "debug")
    assert log_level() == logging.DEBUG
    monkeypatch.setenv("FLOWLAB_LOG_LEVEL", "chatty")
    assert log_level() == logging.INFO


def test_setup_logger_adds_one_handler():
    logger = setup_logger("flowlab.test_handlers")
    again = setup_logger("flowlab.test_handlers")
    assert logger is again
    assert len(logger.handlers) == 1
    assert not logger.propagate
