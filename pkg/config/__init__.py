from .logging_config import setup_logging
from .settings import DEFAULTS, JOBS, LOG_FILE, LOG_LEVEL

__all__ = [
    "DEFAULTS",
    "JOBS",
    "LOG_FILE",
    "LOG_LEVEL",
    "setup_logging",
]
