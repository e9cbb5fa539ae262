"""Thread-pool helpers for running independent enforcement jobs."""

from __future__ import annotations

import atexit
from concurrent.futures import Future, ThreadPoolExecutor
import logging
import os
from typing import Any, Callable, Iterable, TypeVar


_LOGGER = logging.getLogger(__name__)

RUN_JOBS_INLINE = False

T = TypeVar("T")
R = TypeVar("R")


def _resolve_max_workers() -> int:
    raw = os.getenv("STLENFORCE_JOBS_MAX_WORKERS", "1")
    try:
        value = int(raw)
    except ValueError:
        _LOGGER.warning("Invalid STLENFORCE_JOBS_MAX_WORKERS=%r; falling back to 1", raw)
        return 1
    return max(1, value)


_EXECUTOR = ThreadPoolExecutor(max_workers=_resolve_max_workers(), thread_name_prefix="stlenforce-job")


def _shutdown_executor() -> None:
    _EXECUTOR.shutdown(wait=False)


atexit.register(_shutdown_executor)


def _run(target: Callable[..., R], item: Any, label: str) -> R:
    try:
        return target(item)
    except Exception as exc:  # noqa: BLE001
        _LOGGER.exception("Job %s failed: %s", label, exc)
        raise


def map_jobs(target: Callable[[T], R], items: Iterable[T], label: str = "job") -> list[R]:
    """Apply ``target`` to every item; results keep input order, the first failure propagates."""
    items = list(items)
    if RUN_JOBS_INLINE:
        return [_run(target, item, f"{label}[{index}]") for index, item in enumerate(items)]
    futures: list[Future[R]] = [
        _EXECUTOR.submit(_run, target, item, f"{label}[{index}]") for index, item in enumerate(items)
    ]
    return [future.result() for future in futures]
