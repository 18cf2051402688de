"""Process settings for depcag using Pydantic Settings."""

import logging
import os
from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
    TomlConfigSettingsSource,
)

logger = logging.getLogger(__name__)


class DepcagSettings(BaseSettings):
    """Process-wide defaults loaded from a TOML file and DEPCAG_* variables."""

    model_config = SettingsConfigDict(
        env_prefix="DEPCAG_",
        case_sensitive=False,
        extra="ignore",
    )

    # Logging settings
    log_level: str = Field(
        default="INFO", description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )

    # Parallelism
    threads: int = Field(
        default_factory=lambda: os.cpu_count() or 1,
        description="Maximum worker threads for independent evaluations",
    )

    results_dir: Path = Field(
        default=Path("./results"),
        description="Directory where reports given by bare file name are written",
    )

    # Numerical defaults
    ode_step_cap: float = Field(default=1e-2, description="Upper cap of the RK4 step")
    mesh_step_cap: float = Field(default=0.02, description="Upper cap of the fixed-point mesh step")
    picard_tol: float = Field(default=1e-10, description="Picard stopping tolerance")
    picard_max_iter: int = Field(default=1000, description="Picard iteration cap")
    fixed_point_tol: float = Field(
        default=1e-12, description="Tolerance of the per-interval frozen-value iteration"
    )
    fixed_point_max_iter: int = Field(
        default=100, description="Iteration cap of the per-interval frozen-value iteration"
    )
    singular_cond: float = Field(
        default=1e12, description="Condition number above which an E-factor is singular"
    )

    # Bound certification
    samples: int = Field(default=1000, description="Sample budget for sampled bounds")
    inflation: float = Field(default=1.1, description="Inflation applied to sampled maxima")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is a valid Python logging level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(
                f"Invalid log level '{v}'. Must be one of: {', '.join(valid_levels)}"
            )
        return v.upper()

    @field_validator("threads", "picard_max_iter", "fixed_point_max_iter")
    @classmethod
    def validate_positive_int(cls, v: int) -> int:
        if v <= 0:
            raise ValueError(f"Value must be positive, got {v}")
        return v

    @field_validator(
        "ode_step_cap", "mesh_step_cap", "picard_tol", "fixed_point_tol", "singular_cond"
    )
    @classmethod
    def validate_positive_float(cls, v: float) -> float:
        if not v > 0:
            raise ValueError(f"Value must be positive, got {v}")
        return v

    @field_validator("samples")
    @classmethod
    def validate_samples(cls, v: int) -> int:
        if v < 100:
            raise ValueError(f"Sample budget must be at least 100, got {v}")
        return v

    @field_validator("inflation")
    @classmethod
    def validate_inflation(cls, v: float) -> float:
        if v < 1.0:
            raise ValueError(f"Inflation must be >= 1, got {v}")
        return v

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type["BaseSettings"],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """Load from TOML as well as the default sources.

        Priority order (highest to lowest):
        1. Constructor arguments (init_settings)
        2. TOML config file (DEPCAG_CONFIG, default ./config.toml)
        3. Environment variables
        4. .env file
        5. File-based secrets
        """
        toml_path = Path(os.environ.get("DEPCAG_CONFIG", "config.toml"))

        toml_source = None
        if toml_path.exists():
            toml_source = TomlConfigSettingsSource(settings_cls, str(toml_path))
            logger.info(f"Loading configuration from {toml_path}")
        else:
            logger.debug(f"Config file {toml_path} not found, using defaults")

        sources: list[PydanticBaseSettingsSource] = [init_settings]

        if toml_source:
            sources.append(toml_source)

        sources.extend([env_settings, dotenv_settings, file_secret_settings])

        return tuple(sources)

    def to_dict(self) -> dict:
        """Convert configuration to dictionary (useful for logging)."""
        return self.model_dump(mode="python")


# Singleton config instance - single source of truth for process defaults
config = DepcagSettings()
