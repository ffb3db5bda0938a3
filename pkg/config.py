"""Configuration management for the spatio-temporal extremes toolkit."""

from pathlib import Path
from typing import Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables (prefix ``STX_``)."""

    model_config = SettingsConfigDict(
        env_prefix="STX_",
        env_file=".env",
        extra="ignore",
        validate_assignment=True,
    )

    # Directory Configuration
    output_dir: Path = Field(default=Path("./output"))

    # Execution Configuration
    threads: int = Field(default=1, ge=1)
    default_seed: int = Field(default=20240101, ge=0)

    # Chunking: time points per chunk when reducing fields, draws per oracle batch
    risk_chunk_size: int = Field(default=2048, ge=1)
    oracle_batch_size: int = Field(default=5000, ge=1)

    # Logging Configuration
    log_level: str = Field(default="INFO")
    log_format: Literal["json", "console"] = Field(default="console")

    def ensure_output_dir(self) -> Path:
        """Create the output directory if it doesn't exist."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self.output_dir


# Global settings instance
settings = Settings()
