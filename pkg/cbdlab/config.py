"""Configuration module for the cbdlab numerical toolkit."""

import logging

from pydantic import ConfigDict, Field
from pydantic_settings import BaseSettings

# Configure logging for this module
logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Numerical defaults shared by every computation and report."""

    log_level: str = Field(
        default="INFO",
        description="Logging level used by the CLI (DEBUG, INFO, WARNING, ...)",
    )

    # Ellipsoid rounding
    mvee_tolerance: float = Field(
        default=1e-6,
        description="Relative tolerance of the minimum-volume ellipsoid iteration",
    )
    mvee_max_iterations: int = Field(
        default=20000,
        description="Iteration cap for the minimum-volume ellipsoid iteration",
    )
    mvee_net_factor: int = Field(
        default=4,
        description="Direction net size is mvee_net_factor**n * n for non-polytope bodies",
    )
    rank_tolerance: float = Field(
        default=1e-10,
        description="Eigenvalues below rank_tolerance * max are treated as degenerate",
    )
    eigenvalue_floor: float = Field(
        default=1e-14,
        description="Relative eigenvalue floor for symmetric matrix functions",
    )

    # Minkowski dot product ascent
    ascent_tolerance: float = Field(
        default=1e-12,
        description="Stop the alternating ascent when the improvement drops below this",
    )
    ascent_max_sweeps: int = Field(
        default=200,
        description="Maximum number of alternating sweeps per start",
    )
    ascent_random_starts: int = Field(
        default=8,
        description="Number of random unit starts in addition to the coordinate starts",
    )
    ascent_seed: int = Field(
        default=0,
        description="Seed of the generator producing the random ascent starts",
    )
    vertex_enumeration_limit: int = Field(
        default=65536,
        description="Largest extreme-point product enumerated exactly for n >= 3 bodies",
    )

    # Weights and operators
    ainfty_direction_count: int = Field(
        default=64,
        description="Default number of directions in the matrix A_infinity net",
    )
    max_dense_cells: int = Field(
        default=4096,
        description="Largest grid (in cells) on which dense kernel matrices are built",
    )

    # Reports
    report_version: str = Field(
        default="0.1.0",
        description="Version string stamped into every report",
    )
    output_dir: str = Field(
        default="reports",
        description="Default directory for report.json and summary.csv",
    )

    model_config = ConfigDict(
        env_prefix="CBDLAB_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",  # Ignore extra fields from .env
    )

    def __init__(self, **kwargs):
        """Initialize settings and log configuration load."""
        super().__init__(**kwargs)
        logger.info("Configuration loaded successfully")


# Create a singleton instance
try:
    settings = Settings()
except Exception as e:
    logger.error(f"Failed to load configuration: {e}")
    raise

# ============================================================================
# Convenience exports for the numerical services
# ============================================================================

MVEE_TOLERANCE: float = settings.mvee_tolerance
RANK_TOLERANCE: float = settings.rank_tolerance
EIGENVALUE_FLOOR: float = settings.eigenvalue_floor
MAX_DENSE_CELLS: int = settings.max_dense_cells

# Largest supported depth; dyadic measures stay exact in binary floating point
MAX_GRID_DEPTH: int = 40
