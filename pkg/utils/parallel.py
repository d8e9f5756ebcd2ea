"""
Parallel helpers - worker count from the environment and counter-based seeds

Batches are mapped in order, so results never depend on the worker count.
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

import numpy as np

from models.errors import ConfigError

logger = logging.getLogger(__name__)

WORKERS_ENV = "OU_VERIFY_WORKERS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    """Workers requested through OU_VERIFY_WORKERS (default 1)"""
    raw = os.environ.get(WORKERS_ENV, "1").strip()
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}")
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1, got {workers}")
    return workers


def batch_rng(seed: int, batch: int) -> np.random.Generator:
    """Generator for one batch, derived from the master seed by counter"""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(batch),)))


def map_batches(func: Callable[[T], R], items: Iterable[T], workers: int = None) -> List[R]:
    """Ordered map over independent batches on a thread pool"""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    logger.debug("mapping %d batches on %d workers", len(items), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
