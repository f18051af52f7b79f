"""Pydantic schemas for configuration, schema files and persisted documents."""

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import get_hidden_layers_list, settings
from models.enums import Direction, TargetMode


STATE_VERSION = 1
CHECKPOINT_VERSION = 1


# Indicator schema

class IndicatorSpec(BaseModel):
    """One indicator column and its influence on the rating."""
    name: str = Field(..., min_length=1)
    direction: Direction

    @field_validator("name", mode="before")
    @classmethod
    def name_not_blank(cls, v: str) -> str:
        """Strip whitespace so ' GDP' and 'GDP' cannot coexist."""
        if not isinstance(v, str):
            return v  # Let Pydantic handle type validation
        stripped = v.strip()
        if not stripped:
            raise ValueError("Indicator name cannot be empty")
        return stripped

    @field_validator("direction", mode="before")
    @classmethod
    def direction_lowercase(cls, v):
        if isinstance(v, str):
            return v.strip().lower()
        return v


class IndicatorSchema(BaseModel):
    """Ordered indicator list (N >= 2, unique names)."""
    indicators: list[IndicatorSpec]

    model_config = ConfigDict(frozen=True)

    @field_validator("indicators")
    @classmethod
    def at_least_two_unique(cls, v: list[IndicatorSpec]) -> list[IndicatorSpec]:
        if len(v) < 2:
            raise ValueError(f"Schema needs at least 2 indicators, got {len(v)}")
        names = [spec.name for spec in v]
        duplicates = sorted({name for name in names if names.count(name) > 1})
        if duplicates:
            raise ValueError(f"Duplicate indicator names: {duplicates}")
        return v

    @property
    def names(self) -> list[str]:
        return [spec.name for spec in self.indicators]

    @property
    def size(self) -> int:
        return len(self.indicators)


# Run configuration

class RpropConfig(BaseModel):
    """Resilient backpropagation constants."""
    eta_plus: float = Field(default_factory=lambda: settings.RPROP_ETA_PLUS, gt=1.0)
    eta_minus: float = Field(default_factory=lambda: settings.RPROP_ETA_MINUS, gt=0.0, lt=1.0)
    delta_init: float = Field(default_factory=lambda: settings.RPROP_DELTA_INIT, gt=0.0)
    delta_min: float = Field(default_factory=lambda: settings.RPROP_DELTA_MIN, gt=0.0)
    delta_max: float = Field(default_factory=lambda: settings.RPROP_DELTA_MAX, gt=0.0)

    @model_validator(mode="after")
    def step_bounds_ordered(self) -> "RpropConfig":
        if not self.delta_min <= self.delta_init <= self.delta_max:
            raise ValueError(
                f"Rprop steps must satisfy delta_min <= delta_init <= delta_max, got "
                f"{self.delta_min} / {self.delta_init} / {self.delta_max}"
            )
        return self


class NetworkConfig(BaseModel):
    """Architecture and training schedule of the ranking network."""
    input_dim: int = Field(..., ge=1)
    hidden_layers: list[int] = Field(default_factory=get_hidden_layers_list)
    seed: int = Field(default_factory=lambda: settings.SEED, ge=0)
    epochs: int = Field(default_factory=lambda: settings.EPOCHS, ge=1)
    loss_tolerance: float = Field(default_factory=lambda: settings.LOSS_TOLERANCE, ge=0.0)
    rprop: RpropConfig = Field(default_factory=RpropConfig)

    @field_validator("hidden_layers")
    @classmethod
    def widths_positive(cls, v: list[int]) -> list[int]:
        if any(width < 1 for width in v):
            raise ValueError(f"Hidden layer widths must be >= 1, got {v}")
        return v


class RunConfig(BaseModel):
    """Options for one yearly pipeline run (CLI flags map onto these)."""
    year_label: str = "year"
    clusters: int = Field(default_factory=lambda: settings.CLUSTERS, ge=1)
    restarts: int = Field(default_factory=lambda: settings.RESTARTS, ge=1)
    kmeans_max_iter: int = Field(default_factory=lambda: settings.KMEANS_MAX_ITER, ge=1)
    variance_target: float = Field(default_factory=lambda: settings.VARIANCE_TARGET, gt=0.0, le=1.0)
    hidden_layers: list[int] = Field(default_factory=get_hidden_layers_list)
    epochs: int = Field(default_factory=lambda: settings.EPOCHS, ge=1)
    loss_tolerance: float = Field(default_factory=lambda: settings.LOSS_TOLERANCE, ge=0.0)
    seed: int = Field(default_factory=lambda: settings.SEED, ge=0)
    exclude: list[str] = Field(default_factory=list)
    static_targets: bool = False  # force first-year rules even with a previous state
    rprop: RpropConfig = Field(default_factory=RpropConfig)

    def network_config(self, input_dim: int) -> NetworkConfig:
        return NetworkConfig(
            input_dim=input_dim,
            hidden_layers=self.hidden_layers,
            seed=self.seed,
            epochs=self.epochs,
            loss_tolerance=self.loss_tolerance,
            rprop=self.rprop,
        )


# Persisted documents

class ClusterStateDocument(BaseModel):
    """JSON form of a clustering snapshot."""
    entity_ids: list[str]
    labels: list[int]
    centers: list[list[float]]
    rating_vector: list[float]
    projections: list[float]
    cluster_rank: list[int]
    entity_projection: list[float]
    within_cluster_rank: list[int]

    model_config = ConfigDict(extra="ignore")


class YearStateDocument(BaseModel):
    """Versioned JSON form of one year's results (state.json)."""
    version: int = STATE_VERSION
    year_label: str
    entity_ids: list[str]
    target_mode: TargetMode
    cluster_state: ClusterStateDocument
    scores_raw: list[float]
    scores_scaled: list[float]
    ranks: list[int]
    loss_history: list[float] = Field(default_factory=list)
    targets: list[list[float]] = Field(default_factory=list)

    model_config = ConfigDict(extra="ignore")  # newer writers may add fields

    @field_validator("version")
    @classmethod
    def version_supported(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"Unsupported state version {v}")
        return v


class LayerParameters(BaseModel):
    """Weights (out x in) and biases (out) of one fully connected layer."""
    weights: list[list[float]]
    biases: list[float]


class ModelCheckpoint(BaseModel):
    """Versioned JSON checkpoint of a trained ranking network."""
    version: int = CHECKPOINT_VERSION
    config: NetworkConfig
    hidden: list[LayerParameters]
    ranking_weights: list[float]
    ranking_bias: float

    model_config = ConfigDict(extra="ignore")


class ComparisonSummary(BaseModel):
    """Report-level metrics of a year-over-year comparison."""
    current_year: str
    previous_year: str
    entities: int
    average_score_change: float
    kendall_tau_previous: Optional[float] = None
    mean_rank_distance_reference: Optional[float] = None
    kendall_tau_reference: Optional[float] = None
    mean_abs_score_difference_reference: Optional[float] = None
    score_gaps_at_least_one_point: Optional[int] = None
