"""
Runtime defaults read from environment variables
"""

import os

from dotenv import find_dotenv, load_dotenv

from fbsde.jumps.errors import ConfigurationError

# Load env vars from a .env file in or above the working directory
load_dotenv(find_dotenv(usecwd=True))

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


def _positive_int(name: str, default: int) -> int:
    value = os.getenv(name)
    if value is None or value == "":
        return default
    try:
        number = int(value)
    except ValueError:
        raise ConfigurationError(f"{name} must be an integer, got {value!r}")
    if number < 1:
        raise ConfigurationError(f"{name} must be >= 1, got {number}")
    return number


def default_workers() -> int:
    """Worker pool size (env var FBSDE_WORKERS), defaults to the CPU count."""
    return _positive_int("FBSDE_WORKERS", os.cpu_count() or 1)


def default_chunk_size() -> int:
    """Grid points per solver work item (env var FBSDE_CHUNK_SIZE)."""
    return _positive_int("FBSDE_CHUNK_SIZE", 128)


def log_level() -> str:
    """Level of the fbsde logger (env var FBSDE_LOG_LEVEL)."""
    level = os.getenv("FBSDE_LOG_LEVEL", "INFO").upper()
    if level not in LOG_LEVELS:
        raise ConfigurationError(
            f"FBSDE_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {level!r}"
        )
    return level
