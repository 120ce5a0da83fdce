import logging
from logging.config import dictConfig

from pydantic import BaseModel

from fbsde.jumps import settings

LOGGER_NAME = "fbsde"


class LogConfig(BaseModel):
    """Logging configuration applied by the CLI"""

    LOGGER_NAME: str = LOGGER_NAME
    LOG_FORMAT: str = "%(levelname)s | %(asctime)s | %(name)s | %(message)s"
    LOG_LEVEL: str = "INFO"

    # Logging config
    version: int = 1
    disable_existing_loggers: bool = False
    formatters: dict = {
        "default": {
            "format": LOG_FORMAT,
            "datefmt": "%Y-%m-%d %H:%M:%S",
        },
    }
    handlers: dict = {
        "default": {
            "formatter": "default",
            "class": "logging.StreamHandler",
            "stream": "ext://sys.stderr",
        },
    }
    loggers: dict = {
        LOGGER_NAME: {"handlers": ["default"], "level": LOG_LEVEL},
    }


def configure_logging(level: str | None = None) -> logging.Logger:
    """Apply LogConfig, using FBSDE_LOG_LEVEL when no level is given."""
    level = (level or settings.log_level()).upper()
    config = LogConfig(
        LOG_LEVEL=level,
        loggers={LOGGER_NAME: {"handlers": ["default"], "level": level}},
    )
    dictConfig(config.model_dump())
    return logging.getLogger(LOGGER_NAME)
