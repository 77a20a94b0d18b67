import logging
import logging.handlers
import os
import sys
import time
from typing import Any, Dict, Iterable, Mapping, Optional

from config import Config

DETAILED_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s'
CONSOLE_FORMAT = '%(levelname)s %(name)s: %(message)s'

MAIN_LOG = 'alusafe.log'
ERROR_LOG = 'errors.log'


def _rotating_handler(path: str, max_bytes: int, backups: int, level: int) -> logging.Handler:
    handler = logging.handlers.RotatingFileHandler(path, maxBytes=max_bytes, backupCount=backups)
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(DETAILED_FORMAT))
    return handler


def setup_logging(config: Optional[Config] = None, log_level: Optional[str] = None) -> logging.Logger:
    """
    Configure the root logger for a CLI or batch run.

    The console handler writes to stderr; stdout carries only results. With
    ALUSAFE_LOG_TO_FILE on, everything down to DEBUG also goes to a rotating
    main log and errors to a separate rotating error log.
    """
    config = config or Config()
    level_name = (log_level or config.LOG_LEVEL or "WARNING").upper()
    level = getattr(logging, level_name, logging.WARNING)

    root = logging.getLogger()
    root.handlers.clear()
    root.setLevel(logging.DEBUG if config.LOG_TO_FILE else level)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    root.addHandler(console)

    if config.LOG_TO_FILE:
        os.makedirs(config.LOG_DIR, exist_ok=True)
        root.addHandler(_rotating_handler(os.path.join(config.LOG_DIR, MAIN_LOG), 10 * 1024 * 1024, 5, logging.DEBUG))
        root.addHandler(_rotating_handler(os.path.join(config.LOG_DIR, ERROR_LOG), 5 * 1024 * 1024, 3, logging.ERROR))

    quiet_loggers(config.QUIET_LOGGERS)
    root.debug("Logging initialized at %s (files: %s)", level_name, config.LOG_TO_FILE)
    return root


def quiet_loggers(names: Iterable[str]) -> None:
    """Hold chatty library loggers at WARNING."""
    for name in names:
        logging.getLogger(name).setLevel(logging.WARNING)


def format_counters(counters: Mapping[str, Any]) -> str:
    return ', '.join(f"{key}={value}" for key, value in counters.items())


class LoggingMixin:
    """Gives engine classes a logger named after their module and class."""

    @property
    def logger(self) -> logging.Logger:
        if not hasattr(self, '_logger'):
            cls = type(self)
            self._logger = logging.getLogger(f"{cls.__module__}.{cls.__name__}")
        return self._logger


class PerformanceLogger:
    """
    Times a block and logs it together with counters.

    Counters passed at construction describe the job; counters added through
    `update` inside the block describe its outcome. Both appear in the single
    line logged on exit, at ERROR when the block raised.
    """

    def __init__(self, operation: str, logger: Optional[logging.Logger] = None, **context):
        self.operation = operation
        self.logger = logger or logging.getLogger('performance')
        self.context: Dict[str, Any] = dict(context)
        self.counters: Dict[str, Any] = {}
        self.duration = 0.0
        self._started: Optional[float] = None

    def update(self, **counters) -> None:
        self.counters.update(counters)

    def __enter__(self):
        self._started = time.perf_counter()
        self.logger.debug(f"Starting {self.operation} ({format_counters(self.context)})")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.duration = time.perf_counter() - (self._started or time.perf_counter())
        fields = {**self.context, **self.counters}
        if exc_type is None:
            self.logger.info(f"{self.operation} completed in {self.duration:.2f}s - {format_counters(fields)}")
        else:
            fields['error'] = f"{exc_type.__name__}: {exc_val}"
            self.logger.error(f"{self.operation} failed after {self.duration:.2f}s - {format_counters(fields)}")
        return False


def log_run_stats(stats: Mapping[str, Any], logger: Optional[logging.Logger] = None, shown_errors: int = 5):
    """Log the counters of a batch run, then the first few recorded errors."""
    logger = logger or logging.getLogger('run_stats')
    logger.info("experiment statistics")
    for key in sorted(k for k in stats if k != 'errors'):
        logger.info(f"  {key}: {stats[key]}")

    errors = list(stats.get('errors', []))
    if not errors:
        logger.info("No errors encountered")
        return
    logger.warning(f"Errors encountered: {len(errors)}")
    for number, error in enumerate(errors[:shown_errors], 1):
        logger.warning(f"  {number}. {error}")
    if len(errors) > shown_errors:
        logger.warning(f"  ... and {len(errors) - shown_errors} more")
