"""
Runtime configuration using pydantic-settings.
Supports KMSEL_* environment variables and .env files.
"""
import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

_LOG_LEVELS = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


class Settings(BaseSettings):
    """Process-wide settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix="KMSEL_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "kmeans-selective"
    app_version: str = "0.1.0"

    # Parallelism
    threads: int = Field(default_factory=lambda: os.cpu_count() or 1)

    # Logging
    log_level: str = "WARNING"
    log_format: Literal["json", "console"] = "console"

    # Clustering
    max_iter: int = 50
    max_reseeds: int = 100

    # Numerical tolerances
    quadratic_tol: float = 1e-12
    merge_tol: float = 1e-12
    membership_rtol: float = 1e-8

    # Simulation output
    output_dir: Path = Path("./kmsel-output")

    def model_post_init(self, __context: Any) -> None:
        """Validate settings after initialization."""
        if self.threads < 1:
            raise ValueError(f"KMSEL_THREADS must be >= 1, got {self.threads}")
        if self.log_level.upper() not in _LOG_LEVELS:
            raise ValueError(f"Unknown log level: {self.log_level}")
        if self.max_iter < 1:
            raise ValueError(f"KMSEL_MAX_ITER must be >= 1, got {self.max_iter}")
        if self.max_reseeds < 1:
            raise ValueError(f"KMSEL_MAX_RESEEDS must be >= 1, got {self.max_reseeds}")


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


settings = get_settings()
