"""
Seeded random streams
Each (stream, batch) pair gets its own counter-based generator, so a sample
depends only on the seed and its batch, never on the worker that ran it.
"""

import logging
from multiprocessing import Pool
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np

from qsmetric.config import QSMETRIC_THREADS

logger = logging.getLogger("qsmetric.rng")

T = TypeVar("T")
R = TypeVar("R")

STREAMS = {
    "two_sided": 1,
    "diameter": 2,
    "metric_monotone": 3,
    "path_monotone": 4,
    "qs_scatter": 5,
    "lipschitz": 6,
    "lln": 7,
    "km": 8,
    "content": 9,
    "walk": 10,
}


def generator(seed: int, stream: str, *key: int) -> np.random.Generator:
    """Philox generator for one stream and batch."""
    sequence = np.random.SeedSequence(seed, spawn_key=(STREAMS[stream],) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def batches(total: int, batch_size: int) -> List[Tuple[int, int]]:
    """Split a sample count into (batch_id, count) pieces of fixed size."""
    out = []
    start = 0
    batch_id = 0
    while start < total:
        count = min(batch_size, total - start)
        out.append((batch_id, count))
        start += count
        batch_id += 1
    return out


def parallel_map(func: Callable[[T], R], tasks: Sequence[T], workers: int = 0) -> List[R]:
    """
    Map a picklable function over tasks, preserving task order.

    Args:
        func: Module-level function
        tasks: Task arguments
        workers: Process count (0 uses QSMETRIC_THREADS)

    Returns:
        Results in task order
    """
    workers = workers or QSMETRIC_THREADS
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    workers = min(workers, len(tasks))
    logger.debug(f"Mapping {len(tasks)} batches over {workers} workers")
    with Pool(workers) as pool:
        return pool.map(func, tasks)
