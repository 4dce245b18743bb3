"""
Process-level settings for gazesplat.
"""

from typing import Optional

import torch
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True)

    # Compute configuration
    NUM_THREADS: int = 0

    # Serving configuration
    SERVER_HOST: str = "0.0.0.0"
    SERVER_PORT: int = 8000
    CHECKPOINT_DIR: Optional[str] = None
    ORACLE_DIR: Optional[str] = None

    # Development settings
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"


def apply_torch_settings(current: Settings) -> None:
    """Push thread count into torch; called once at process entry."""
    if current.NUM_THREADS > 0:
        torch.set_num_threads(current.NUM_THREADS)


# Global settings instance
settings = Settings()
