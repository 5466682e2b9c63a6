"""
Exception hierarchy shared by the toolkit
"""
from typing import Optional


class EventSentimentError(Exception):
    """Base class for all toolkit errors"""


class DataValidationError(EventSentimentError, ValueError):
    """Input data violates its schema or a domain invariant"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class ConfigError(EventSentimentError):
    pass


class InsufficientDataError(EventSentimentError):
    pass


class CalendarExhaustedError(InsufficientDataError):
    pass


class RankDeficiencyError(EventSentimentError):
    pass


class ConvergenceError(EventSentimentError):
    pass


class SplitLeakageError(DataValidationError):
    pass
