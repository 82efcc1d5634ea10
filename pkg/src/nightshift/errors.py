"""Exception types shared across the pipeline."""
from __future__ import annotations


class NightshiftError(Exception):
    """Base class for all pipeline errors."""


class LabelParseError(NightshiftError):
    """Label file could not be parsed as the supported schema."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ValidationError(NightshiftError):
    """An input violated a documented invariant or precondition."""


class EvaluationError(NightshiftError):
    """Detector output could not be scored (unknown image id, no ground truth, ...)."""


class TranslationError(NightshiftError):
    """Translation outputs are missing or inconsistent with their sources."""

    def __init__(self, message: str, ids: list[str] | None = None):
        self.ids = ids or []
        if self.ids:
            message = f"{message}: {', '.join(self.ids)}"
        super().__init__(message)


class AdapterError(NightshiftError):
    """An external adapter process failed."""

    def __init__(self, message: str, command: str = "", returncode: int | None = None,
                 log_tail: str = ""):
        self.command = command
        self.returncode = returncode
        self.log_tail = log_tail
        super().__init__(message)
