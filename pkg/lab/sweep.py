"""Concurrent evaluation of independent sweep points.

Points run in a thread pool through the event loop; progress is published on
the :class:`EventBus` as ``<name>.started``, ``<name>.point`` and
``<name>.finished``, and logged by a subscriber for the duration of the run.
Results always come back in input order.
"""

from __future__ import annotations

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional

from core.event_bus import EventBus, SweepProgress
from core.utils.telemetry import Stopwatch

logger = logging.getLogger(__name__)


class SweepRunner:
    def __init__(self, event_bus: Optional[EventBus] = None, max_workers: Optional[int] = None,
                 name: str = "sweep") -> None:
        self.event_bus = event_bus or EventBus()
        self.max_workers = max_workers
        self.name = name

    async def _log_progress(self, progress: SweepProgress) -> None:
        logger.debug("%s point %d/%d done", self.name, progress.index + 1, progress.total)

    async def run_async(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        points = list(items)
        loop = asyncio.get_running_loop()
        watch = Stopwatch()
        await self.event_bus.subscribe(f"{self.name}.point", self._log_progress)
        try:
            await self.event_bus.publish(f"{self.name}.started", SweepProgress(len(points)))

            async def one(index: int, item: Any) -> Any:
                result = await loop.run_in_executor(pool, fn, item)
                await self.event_bus.publish(f"{self.name}.point", SweepProgress(len(points), index, item))
                return result

            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                # gather keeps the order of its arguments
                results = await asyncio.gather(*(one(i, item) for i, item in enumerate(points)))
            await self.event_bus.publish(f"{self.name}.finished", SweepProgress(len(points)))
        finally:
            await self.event_bus.unsubscribe(self._log_progress)
        logger.info("%s: %d points in %.2fs", self.name, len(points), watch.elapsed)
        return list(results)

    def map(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """Blocking form of :meth:`run_async`, usable as a ``map`` replacement."""
        return asyncio.run(self.run_async(fn, items))
