"""
Filename: parallel.py
Description:
    Order-preserving thread pool map. Results come back in input order, so
    max-reductions and reports built from them do not depend on scheduling.

License: Apache 2.0
"""
from concurrent import futures
from typing import Callable, Iterable, Optional, TypeVar

from ..config import config
from .log import setup_logger

T = TypeVar("T")
R = TypeVar("R")

logger = setup_logger("depcag.parallel")


def ordered_map(fn: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None) -> list[R]:
    """
    Apply fn to every item, in parallel when more than one worker is allowed.

    :param fn: pure function of one item
    :param items: inputs
    :param max_workers: worker cap, defaults to the `threads` setting
    :return: results in input order; the first exception raised by fn propagates
    """
    work = list(items)
    workers = min(max_workers or config.threads, len(work))
    if workers <= 1:
        return [fn(item) for item in work]
    logger.debug(f"ordered_map items={len(work)} workers={workers}")
    with futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, work))
