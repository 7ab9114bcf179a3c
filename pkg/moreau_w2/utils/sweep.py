"""
Moreau-W2 - Sweeps
Description: Order-preserving parallel evaluation of independent sweep rows
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, fields
from typing import Any, Callable, List, Optional, Sequence, Tuple, TypeVar

from moreau_w2.utils.config import worker_count

logger = logging.getLogger(__name__)

K = TypeVar("K")
R = TypeVar("R")


def run_rows(fn: Callable[[K], R], keys: Sequence[K], workers: Optional[int] = None) -> List[R]:
    """
    Evaluate fn on every key, concurrently when more than one worker is allowed.

    Args:
        fn: Pure function of one sweep key
        keys: Sweep keys (e.g. a delta grid)
        workers: Worker cap; defaults to MOREAU_W2_THREADS

    Returns:
        Results in the order of ``keys``
    """
    workers = worker_count() if workers is None else max(1, workers)
    workers = min(workers, len(keys)) if keys else 1
    logger.debug(f"Sweeping {len(keys)} rows on {workers} worker(s)")
    if workers == 1:
        return [fn(k) for k in keys]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, keys))


def table(rows: Sequence[Any]) -> Tuple[List[str], List[Tuple]]:
    """Header and value tuples of a list of dataclass rows"""
    if not rows:
        return [], []
    header = [f.name for f in fields(rows[0])]
    return header, [astuple(r) for r in rows]
