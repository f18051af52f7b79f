"""Configuration management using Pydantic Settings."""

from pydantic import ConfigDict
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Ranking run defaults loaded from environment variables (or .env)."""

    model_config = ConfigDict(
        env_file=".env",
        case_sensitive=True,
        extra="ignore"  # Ignore extra fields
    )

    # Clustering (5 clusters, 50+ restarts for stable partitions)
    CLUSTERS: int = 5
    RESTARTS: int = 50
    KMEANS_MAX_ITER: int = 300

    # PCA: retain components covering ~95% of the variance
    VARIANCE_TARGET: float = 0.95

    # Eigensolver
    JACOBI_MAX_SWEEPS: int = 100
    JACOBI_TOLERANCE: float = 1e-12

    # Ranking network
    HIDDEN_LAYERS: str = "10,10,10"
    EPOCHS: int = 500
    LOSS_TOLERANCE: float = 1e-7
    SEED: int = 0

    # Rprop constants (Riedmiller defaults)
    RPROP_ETA_PLUS: float = 1.2
    RPROP_ETA_MINUS: float = 0.5
    RPROP_DELTA_INIT: float = 0.1
    RPROP_DELTA_MIN: float = 1e-6
    RPROP_DELTA_MAX: float = 50.0

    # Logging
    LOG_DIR: str = "logs"
    LOG_TO_FILE: bool = False
    DEBUG: bool = False


settings = Settings()


def get_hidden_layers_list() -> list[int]:
    """Parse HIDDEN_LAYERS string into list of layer widths."""
    return parse_layer_widths(settings.HIDDEN_LAYERS)


def parse_layer_widths(value: str) -> list[int]:
    """Parse a comma separated width list such as ``"10,10,10"``.

    An empty string means no hidden layers (purely linear ranking layer).
    """
    return [int(width.strip()) for width in value.split(",") if width.strip()]
