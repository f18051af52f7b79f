"""Logging setup for the ranking CLI: console always, rotating files on request."""

import logging
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Optional

from app.config import settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _rotating_handler(path: Path, level: int, keep_days: int, formatter: logging.Formatter) -> logging.Handler:
    handler = TimedRotatingFileHandler(
        filename=str(path),
        when="midnight",
        interval=1,
        backupCount=keep_days,
        encoding="utf-8",
    )
    handler.setLevel(level)
    handler.setFormatter(formatter)
    handler.suffix = "%Y-%m-%d"  # ranking.log.2026-01-31
    return handler


def setup_logging(log_dir: Optional[str] = None, to_file: Optional[bool] = None) -> None:
    """
    Configure the root logger for a CLI invocation.

    Console records go to stderr so report output is never mixed with log
    lines. With file logging enabled, ``ranking.log`` keeps a week of INFO
    records and ``error.log`` two weeks of errors; if the directory cannot be
    created the run continues console-only.

    Args:
        log_dir: Directory for log files (default: settings.LOG_DIR)
        to_file: Enable file handlers (default: settings.LOG_TO_FILE)
    """
    log_dir = log_dir or settings.LOG_DIR
    to_file = settings.LOG_TO_FILE if to_file is None else to_file

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    level = logging.DEBUG if settings.DEBUG else logging.INFO

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    # main() may be called several times in one process (tests)
    root_logger.handlers.clear()

    console = logging.StreamHandler()
    console.setLevel(level)
    console.setFormatter(formatter)
    root_logger.addHandler(console)

    if not to_file:
        return

    try:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        root_logger.addHandler(_rotating_handler(log_path / "ranking.log", logging.INFO, 7, formatter))
        root_logger.addHandler(_rotating_handler(log_path / "error.log", logging.ERROR, 14, formatter))
        logging.info(f"📋 Logging to console and {log_dir}/")
    except OSError as e:
        logging.warning(f"⚠️ File logging unavailable ({e}), using console-only mode")
