from __future__ import annotations

from typing import Any

class FlowlabError(Exception):
    """Base class for every error raised by flowlab."""

    exit_code = 1

class InputValidationError(FlowlabError, ValueError):
    exit_code = 2

class EstimationError(FlowlabError, RuntimeError):
    exit_code = 3

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}

class PanelIOError(FlowlabError, OSError):
    exit_code = 4
