"""
Chunked, optionally threaded accumulation over point sets.

Chunk boundaries depend only on the problem size, never on the worker count,
and partial results are combined by a fixed pairwise tree, so results are
bit-identical whatever ``SPLATREG_THREADS`` is set to.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')

# Upper bound on k * n_chunk entries per (k, n, d) intermediate
CHUNK_ELEMENTS = 1 << 18


def worker_count() -> int:
    """Worker threads allowed by SPLATREG_THREADS (0 or unset = cpu count)."""
    raw = os.environ.get('SPLATREG_THREADS', '0').strip() or '0'
    try:
        n = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer SPLATREG_THREADS=%r", raw)
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def point_chunks(n_points: int, n_splats: int) -> List[slice]:
    """Split range(n_points) into slices sized so k * len(slice) stays bounded."""
    size = max(1, CHUNK_ELEMENTS // max(1, n_splats))
    return [slice(start, min(start + size, n_points)) for start in range(0, n_points, size)]


def pairwise_sum(parts: Sequence[T], add: Callable[[T, T], T]) -> T:
    """Reduce ``parts`` with a fixed balanced binary tree."""
    if not parts:
        raise ValueError("pairwise_sum needs at least one part")
    level = list(parts)
    while len(level) > 1:
        merged = [add(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            merged.append(level[-1])
        level = merged
    return level[0]


def map_chunks(fn: Callable[[slice], T], chunks: Sequence[slice]) -> List[T]:
    """Apply ``fn`` to every chunk, in order, using threads when it pays off."""
    workers = min(worker_count(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))
