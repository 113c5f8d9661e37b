from __future__ import annotations

import logging
import sys
from contextlib import contextmanager
from typing import Any, Iterator

try:
    import structlog

    HAS_STRUCTLOG = True
except ImportError:
    HAS_STRUCTLOG = False

_RUN_FIELDS = ("experiment", "config_hash", "seed")


def setup_logging(level: str = "WARNING", json_format: bool = False) -> None:
    """
    Configure logging for anisores runs.

    Events from the numerical stages carry the run context bound by ``run_context``
    (experiment, config hash, seed), so the JSON lines of one run can be filtered out of a
    shared log.
    """
    numeric_level = getattr(logging, level.upper(), logging.WARNING)
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=numeric_level)
    if not HAS_STRUCTLOG:
        return

    processors: list[Any] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.filter_by_level,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        structlog.processors.format_exc_info,
        structlog.processors.UnicodeDecoder(),
        structlog.processors.JSONRenderer() if json_format else structlog.dev.ConsoleRenderer(),
    ]
    structlog.configure(
        processors=processors,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


@contextmanager
def run_context(experiment: str, config_hash: str, seed: int) -> Iterator[None]:
    """Bind the run identity to every event logged inside the block."""
    if not HAS_STRUCTLOG:
        yield
        return
    with structlog.contextvars.bound_contextvars(
        experiment=experiment, config_hash=config_hash[:12], seed=seed
    ):
        yield


def run_fields() -> dict[str, Any]:
    """Currently bound run context (empty outside ``run_context``)."""
    if not HAS_STRUCTLOG:
        return {}
    bound = structlog.contextvars.get_contextvars()
    return {key: bound[key] for key in _RUN_FIELDS if key in bound}


def get_logger(name: str) -> Any:
    if HAS_STRUCTLOG:
        return structlog.get_logger(name)
    return logging.getLogger(name)
