"""
Run identifiers for log correlation.
"""
import hashlib
import json
import logging
import sys
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Any, Iterator, Mapping

# Context variable for the current run id
run_id_var: ContextVar[str] = ContextVar("run_id", default="-")

LOG_FORMAT = "[%(run_id)s] %(asctime)s - %(name)s - %(levelname)s - %(message)s"


def make_run_id(command: str, params: Mapping[str, Any]) -> str:
    """
    Derive a run id from the command and its full configuration.

    Identical configurations get identical ids, so the id can go into
    output files without breaking byte-for-byte reproducibility.
    """
    payload = json.dumps({"command": command, "params": params}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def get_run_id() -> str:
    """Get the current run id."""
    return run_id_var.get()


@contextmanager
def run_context(run_id: str) -> Iterator[str]:
    """Bind a run id to every log record emitted inside the block."""
    token = run_id_var.set(run_id)
    try:
        yield run_id
    finally:
        run_id_var.reset(token)


class RunIDFilter(logging.Filter):
    """Logging filter to include the run id in log records."""

    def filter(self, record: logging.LogRecord) -> bool:
        """Add run id to log record."""
        record.run_id = get_run_id()
        return True


def setup_logging_with_run_id(level: str = "INFO"):
    """Configure stderr logging with run ids; stdout stays free for summaries."""
    root_logger = logging.getLogger()
    root_logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    handler = next(
        (h for h in root_logger.handlers if getattr(h, "_rfmr", False)),
        None,
    )
    if handler is None:
        handler = logging.StreamHandler(sys.stderr)
        handler._rfmr = True
        handler.addFilter(RunIDFilter())
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root_logger.addHandler(handler)
    return handler
