"""Structured logging configuration for the spatio-temporal extremes toolkit."""

import logging
import sys
from typing import Any, Dict

import numpy as np
import structlog

from config import settings

# Arrays longer than this are summarized instead of inlined in log events
MAX_INLINE_ARRAY = 16


def to_builtin(value: Any) -> Any:
    """Convert numpy scalars and small arrays to plain Python values."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        if value.size <= MAX_INLINE_ARRAY:
            return value.tolist()
        return f"<ndarray shape={value.shape} dtype={value.dtype}>"
    return value


def numpy_processor(logger, method_name: str, event_dict: Dict[str, Any]) -> Dict[str, Any]:
    """Coerce numpy values in the event dict so every renderer can serialize them."""
    for key, value in event_dict.items():
        event_dict[key] = to_builtin(value)
    return event_dict


def configure_logging() -> None:
    """Configure structured logging for the application."""
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
    )

    processors = [
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_logger_name,
        structlog.stdlib.add_log_level,
        structlog.stdlib.PositionalArgumentsFormatter(),
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        numpy_processor,
    ]

    if settings.log_format == "json":
        processors.append(structlog.processors.JSONRenderer())
    else:
        processors.append(structlog.dev.ConsoleRenderer())

    structlog.configure(
        processors=processors,
        wrapper_class=structlog.stdlib.BoundLogger,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def get_logger(name: str) -> structlog.BoundLogger:
    """Get a configured logger instance."""
    return structlog.get_logger(name)


# Configure logging on import
configure_logging()
