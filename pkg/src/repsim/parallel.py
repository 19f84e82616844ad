"""Thread-pool helpers honoring the REPSIM_THREADS cap."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

from .errors import ValidationError

T = TypeVar("T")
R = TypeVar("R")

ENV_VAR = "REPSIM_THREADS"


def worker_count() -> int:
    """Internal parallelism cap: REPSIM_THREADS if set, else available cores."""
    raw = os.environ.get(ENV_VAR)
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(f"{ENV_VAR} must be an integer, got {raw!r}")
    if value < 1:
        raise ValidationError(f"{ENV_VAR} must be >= 1, got {value}")
    return value


def map_slots(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map *fn* over *items*, preserving order.

    Items run on a thread pool when more than one worker is allowed; results
    land in preassigned slots so the output never depends on scheduling.
    """
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
