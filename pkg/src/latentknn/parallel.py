"""
Parallel - Deterministic fan-out of per-row work over a thread pool

Every task is a pure function of immutable inputs; results are placed back
by index, so the output never depends on the number of workers or on the
order in which tasks finish.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, List, Optional, Sequence, TypeVar

from latentknn.errors import ConfigError, RunCancelled

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# progress(current, total)
ProgressFn = Callable[[int, int], None]


def map_rows(
    fn: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    progress: Optional[ProgressFn] = None,
    should_stop: Optional[Callable[[], bool]] = None,
) -> List[R]:
    """Apply fn to every item, returning results in input order"""
    if workers < 1:
        raise ConfigError(f"worker count must be at least 1, got {workers}")

    total = len(items)
    results: List[Optional[R]] = [None] * total

    if workers == 1 or total <= 1:
        for idx, item in enumerate(items):
            if should_stop and should_stop():
                raise RunCancelled(f"cancelled after {idx} of {total} rows")
            results[idx] = fn(item)
            if progress:
                progress(idx + 1, total)
        return results

    done = 0
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(fn, item): idx for idx, item in enumerate(items)}
        try:
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                done += 1
                if progress:
                    progress(done, total)
                if should_stop and should_stop():
                    raise RunCancelled(f"cancelled after {done} of {total} rows")
        except BaseException:
            for future in futures:
                future.cancel()
            raise

    logger.debug(f"Mapped {total} rows on {workers} workers")
    return results
