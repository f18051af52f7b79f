"""Enumerations shared by the rating stages, persisted state and reports."""

from enum import Enum


class Direction(str, Enum):
    """Influence of an indicator on the final rating."""
    POSITIVE = "positive"    # higher raw value is better
    NEGATIVE = "negative"    # higher raw value is worse


class TargetMode(str, Enum):
    """Rule set used to build the target-probability matrix."""
    STATIC = "static"        # first year: cluster order + within-cluster ranks
    DYNAMIC = "dynamic"      # later years: also accounts for cluster moves


class Movement(int, Enum):
    """Year-over-year cluster movement of one entity."""
    DOWNGRADED = -1
    STAYED = 0
    UPGRADED = 1


class RankMarker(str, Enum):
    """Direction marker for a rank change between two years."""
    UP = "up"
    DOWN = "down"
    SAME = "same"
