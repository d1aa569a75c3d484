"""Worker-thread configuration for data-parallel grid evaluation."""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

from wildtorus.exceptions import ParameterError

logger = logging.getLogger(__name__)

THREADS_ENV = 'WILDTORUS_THREADS'

T = TypeVar('T')
R = TypeVar('R')

_override: Optional[int] = None


def _parse_threads(raw: str) -> int:
    try:
        value = int(raw)
    except ValueError:
        raise ParameterError(f'{THREADS_ENV} must be a positive integer, got {raw!r}')
    if value < 1:
        raise ParameterError(f'{THREADS_ENV} must be a positive integer, got {raw!r}')
    return value


def set_threads(count: Optional[int]) -> None:
    """Overrides the environment setting for this process (``None`` restores it)."""
    global _override
    if count is not None and count < 1:
        raise ParameterError(f'thread count must be positive, got {count}')
    _override = count


def thread_count() -> int:
    """Number of worker threads: explicit override, then ``WILDTORUS_THREADS``, then 1."""
    if _override is not None:
        return _override
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == '':
        return 1
    return _parse_threads(raw.strip())


def map_chunks(fn: Callable[[T], R], chunks: Sequence[T]) -> List[R]:
    """Applies ``fn`` to every chunk, in order, on the configured number of threads.

    numpy releases the GIL inside its kernels, so row chunks of a grid evaluate
    concurrently; results come back in input order so the merge is deterministic.
    """
    workers = min(thread_count(), max(len(chunks), 1))
    if workers == 1:
        return [fn(chunk) for chunk in chunks]
    logger.debug('evaluating %d chunks on %d threads', len(chunks), workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))
