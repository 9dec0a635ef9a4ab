# Housing Recession Impact - Region Fan-out
# =========================================
#
# Runs a per-region function over many regions, optionally on a thread pool.
# AnalysisError from one region becomes a Skip; anything else propagates.
# Results come back sorted by region code whatever order workers finish in.

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Generic, List, Optional, Sequence, Tuple, TypeVar

import config
from errors import AnalysisError
from ingest import RegionId
from monitoring import RunMonitor

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass(frozen=True)
class Skip:
    region: RegionId
    reason: str


@dataclass
class BatchResult(Generic[R]):
    results: List[Tuple[RegionId, R]]
    skipped: List[Skip]


def run_regions(
    items: Sequence[T],
    region_of: Callable[[T], RegionId],
    func: Callable[[T], R],
    jobs: int = 1,
    monitor: Optional[RunMonitor] = None,
) -> BatchResult[R]:
    """Apply ``func`` to every item; ``jobs`` > 1 uses a thread pool."""
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")

    results: List[Tuple[RegionId, R]] = []
    skipped: List[Skip] = []

    def run_single(item: T) -> R:
        if monitor is None:
            return func(item)
        with monitor.track_region():
            return func(item)

    def record(region: RegionId, outcome: Callable[[], R]) -> None:
        try:
            value = outcome()
        except AnalysisError as e:
            logger.warning(f"Skipping region {region.code}: {e}")
            skipped.append(Skip(region=region, reason=f"{type(e).__name__}: {e}"))
            if monitor is not None:
                monitor.record_region("skipped")
            return
        results.append((region, value))
        if monitor is not None:
            monitor.record_region("ok")

    if jobs == 1:
        for item in items:
            record(region_of(item), lambda item=item: run_single(item))
    else:
        with ThreadPoolExecutor(max_workers=min(jobs, config.MAX_WORKERS)) as executor:
            future_to_item = {executor.submit(run_single, item): item for item in items}
            for future in as_completed(future_to_item):
                record(region_of(future_to_item[future]), future.result)

    results.sort(key=lambda pair: pair[0].code)
    skipped.sort(key=lambda s: s.region.code)
    logger.info(f"Processed {len(results) + len(skipped)} regions: {len(results)} ok, {len(skipped)} skipped")
    return BatchResult(results=results, skipped=skipped)
