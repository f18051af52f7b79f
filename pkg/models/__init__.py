"""Enums, exceptions and Pydantic schemas."""

from models.enums import Direction, Movement, RankMarker, TargetMode
from models.errors import (
    DegenerateColumn,
    DegenerateScores,
    ImputationError,
    InvalidInput,
    NumericalFailure,
    ParseError,
    RankingError,
    ReportWriteError,
)
from models.schemas import (
    IndicatorSchema,
    IndicatorSpec,
    ModelCheckpoint,
    NetworkConfig,
    RpropConfig,
    RunConfig,
    YearStateDocument,
)

__all__ = [
    "Direction",
    "Movement",
    "RankMarker",
    "TargetMode",
    "RankingError",
    "InvalidInput",
    "ParseError",
    "ImputationError",
    "DegenerateColumn",
    "NumericalFailure",
    "DegenerateScores",
    "ReportWriteError",
    "IndicatorSchema",
    "IndicatorSpec",
    "ModelCheckpoint",
    "NetworkConfig",
    "RpropConfig",
    "RunConfig",
    "YearStateDocument",
]
