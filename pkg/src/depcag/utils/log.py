"""
Filename: log.py
Description:
    Logging across depcag.
    Console output on stderr, an optional rotating log file, text or JSON:

        DEPCAG_LOG_LEVEL       – global default level (DEBUG, INFO, WARNING, ERROR)
        DEPCAG_LOG_LEVELS      – per-component overrides, comma-separated
                                 e.g. "depcag.flow=DEBUG,depcag.conjugacy=WARNING"
        DEPCAG_LOG_FORMAT      – "text" (default) or "json"
        DEPCAG_LOG_FILE        – path to a log file (10 MB, 5 backups)

    Records logged inside `run_context` carry its fields (the CLI sets the
    command and the configuration source). Warnings raised through
    `numerical_warning` carry the offending quantities as structured fields,
    so JSON logs of a sweep can be filtered on them.

License: Apache 2.0
"""
import json
import logging
import logging.handlers
import os
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any, Iterator, Optional


_TEXT_FORMAT = "[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s"
_TEXT_DATEFMT = "%Y-%m-%d %H:%M:%S"
_FILE_MAX_BYTES = 10 * 1024 * 1024
_FILE_BACKUPS = 5

_run_fields: ContextVar[Optional[dict[str, str]]] = ContextVar("depcag_run_fields", default=None)
_configured_handlers: list[logging.Handler] = []
_initialized = False


@contextmanager
def run_context(**fields: Any) -> Iterator[None]:
    """Attach key=value fields to every record logged in the block; None values are skipped."""
    merged = {**current_run_context(), **{k: str(v) for k, v in fields.items() if v is not None}}
    token = _run_fields.set(merged)
    try:
        yield
    finally:
        _run_fields.reset(token)


def current_run_context() -> dict[str, str]:
    return dict(_run_fields.get() or {})


class RunContextFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        record.run = current_run_context()
        return True


def _numeric_text(fields: dict[str, Any]) -> str:
    return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in fields.items())


def numerical_warning(logger: logging.Logger, event: str, **fields: Any) -> None:
    """WARNING `event key=value ...`; the fields also travel as the record's `numeric` attribute."""
    logger.warning(f"{event} {_numeric_text(fields)}".rstrip(), extra={"numeric": fields})


class TextFormatter(logging.Formatter):
    """The plain format with the run context appended in brackets."""

    def __init__(self):
        super().__init__(_TEXT_FORMAT, _TEXT_DATEFMT)

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        run = getattr(record, "run", None)
        return f"{line} [{_numeric_text(run)}]" if run else line


class JSONFormatter(logging.Formatter):
    """Formats log records as single-line JSON objects."""

    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "timestamp": self.formatTime(record, _TEXT_DATEFMT),
            "level": record.levelname,
            "component": record.name,
            "message": record.getMessage(),
        }
        run = getattr(record, "run", None)
        if run:
            entry["run"] = run
        numeric = getattr(record, "numeric", None)
        if numeric:
            entry["fields"] = numeric
        if record.exc_info and record.exc_info[0] is not None:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


def _global_level() -> int:
    return getattr(logging, os.environ.get("DEPCAG_LOG_LEVEL", "INFO").upper(), logging.INFO)


def _component_levels() -> dict[str, int]:
    levels = {}
    for pair in os.environ.get("DEPCAG_LOG_LEVELS", "").split(","):
        name, _, level_str = pair.partition("=")
        level = getattr(logging, level_str.strip().upper(), None)
        if name.strip() and isinstance(level, int):
            levels[name.strip()] = level
    return levels


def _init_shared_handlers():
    """Initialize shared handlers once; all loggers reuse them."""
    global _initialized
    if _initialized:
        return
    _initialized = True

    formatter = JSONFormatter() if os.environ.get("DEPCAG_LOG_FORMAT", "text").lower() == "json" else TextFormatter()
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_file = os.environ.get("DEPCAG_LOG_FILE")
    if log_file:
        handlers.append(logging.handlers.RotatingFileHandler(log_file, maxBytes=_FILE_MAX_BYTES,
                                                             backupCount=_FILE_BACKUPS))
    for handler in handlers:
        handler.setFormatter(formatter)
        _configured_handlers.append(handler)


def setup_logger(name: str, level: Optional[int] = None) -> logging.Logger:
    """
    Named logger on the shared handlers, tagging records with the run context.

    :param name: hierarchical component name (e.g. "depcag.flow")
    :param level: explicit level; if None, resolved from DEPCAG_LOG_LEVELS,
        then DEPCAG_LOG_LEVEL, then INFO
    """
    _init_shared_handlers()

    logger = logging.getLogger(name)
    if not logger.handlers:
        logger.setLevel(level if level is not None else _component_levels().get(name, _global_level()))
        logger.propagate = False
        if not any(isinstance(f, RunContextFilter) for f in logger.filters):
            logger.addFilter(RunContextFilter())
        for handler in _configured_handlers:
            logger.addHandler(handler)
    return logger


def reset_logging():
    """Reset global logging state. Intended for testing only."""
    global _initialized
    _initialized = False
    _configured_handlers.clear()
