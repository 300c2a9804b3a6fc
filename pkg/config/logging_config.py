import logging.config
from pathlib import Path
from typing import Optional, Union


def setup_logging(default_level: Union[int, str] = logging.INFO, log_file: Optional[str] = None) -> None:
    """Setup logging configuration."""
    handlers = {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "standard",
            "level": default_level,
        },
    }
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers["file"] = {
            "class": "logging.FileHandler",
            "formatter": "standard",
            "level": default_level,
            "filename": log_file,
            "mode": "a",
        }

    logging_config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "standard": {
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                "datefmt": "%Y-%m-%d %H:%M:%S",
            },
        },
        "handlers": handlers,
        "loggers": {
            "PIL": {"level": "WARNING"},
        },
        "root": {
            "handlers": list(handlers),
            "level": default_level,
        },
    }
    logging.config.dictConfig(logging_config)
    logging.getLogger(__name__).debug(f"Logging configured with level: {logging.getLevelName(default_level)}")
