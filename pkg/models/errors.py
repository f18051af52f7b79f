"""Exception hierarchy shared by every stage of the ranking pipeline.

Each error carries the process exit code the CLI should return and an optional
stage label set by the pipeline when the error crosses a stage boundary.
"""

from typing import Optional


class RankingError(Exception):
    """Base class for all pipeline errors."""

    exit_code: int = 1

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self) -> str:
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class InvalidInput(RankingError):
    """Input data, configuration or precondition violation."""


class ParseError(InvalidInput):
    """Malformed input file, with the offending position when known."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ImputationError(InvalidInput):
    """A group has no present value for an indicator it needs to impute."""

    def __init__(self, group: str, indicator: str):
        super().__init__(
            f"Cannot impute indicator '{indicator}' for group '{group}': "
            f"no present values in that group"
        )
        self.group = group
        self.indicator = indicator


class DegenerateColumn(InvalidInput):
    """Indicator with identical values for every entity (max == min)."""

    def __init__(self, indicator: str):
        super().__init__(f"Indicator '{indicator}' is constant; min-max scaling is undefined")
        self.indicator = indicator


class NumericalFailure(RankingError):
    """Numerical routine failed to converge or produced unusable output."""

    exit_code = 2


class DegenerateScores(NumericalFailure):
    """All raw scores are equal, so the 1-7 scale cannot be anchored."""


class ReportWriteError(RankingError):
    """Output artefact could not be written."""

    def __init__(self, path: str, reason: str):
        super().__init__(f"Failed to write '{path}': {reason}")
        self.path = path
