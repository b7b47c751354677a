"""
Structured logging configuration using structlog.

Log output goes to stderr; stdout is reserved for machine-readable results.
"""
import logging
import sys
from typing import Any

import numpy as np
import structlog
from structlog.types import Processor

from kmeans_selective.core.config import settings


def to_loggable(value: Any) -> Any:
    """
    Convert numpy values into plain Python objects.

    Arrays are summarized by shape and dtype rather than dumped.
    """
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        if value.size <= 8:
            return value.tolist()
        return f"ndarray(shape={value.shape}, dtype={value.dtype})"
    if isinstance(value, dict):
        return {k: to_loggable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_loggable(item) for item in value]
    return value


def numpy_processor(
    logger: structlog.BoundLogger,
    method_name: str,
    event_dict: dict[str, Any],
) -> dict[str, Any]:
    """Structlog processor making numpy payloads JSON-safe."""
    return {key: to_loggable(value) for key, value in event_dict.items()}


def setup_logging(level: str | None = None, log_format: str | None = None) -> None:
    """Configure structured logging for the package."""
    level_name = (level or settings.log_level).upper()
    fmt = log_format or settings.log_format

    shared_processors: list[Processor] = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.StackInfoRenderer(),
        structlog.dev.set_exc_info,
        structlog.processors.TimeStamper(fmt="iso"),
        numpy_processor,
    ]

    if fmt == "json":
        processors: list[Processor] = [
            *shared_processors,
            structlog.processors.dict_tracebacks,
            structlog.processors.JSONRenderer(),
        ]
    else:
        processors = [
            *shared_processors,
            structlog.dev.ConsoleRenderer(colors=sys.stderr.isatty()),
        ]

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(getattr(logging, level_name)),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level_name),
    )


def get_logger(name: str | None = None) -> structlog.BoundLogger:
    """Get a structured logger instance."""
    return structlog.get_logger(name)


def bind_context(**kwargs: Any) -> None:
    """Bind context variables to the current logging context."""
    structlog.contextvars.bind_contextvars(**kwargs)


def clear_context() -> None:
    """Clear all context variables."""
    structlog.contextvars.clear_contextvars()
