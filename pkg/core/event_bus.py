# File: core/event_bus.py

import asyncio
import fnmatch
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Any, Awaitable, Callable, List, Optional

Handler = Callable[[Any], Awaitable[None]]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepProgress:
    """Payload of ``<sweep>.started``, ``<sweep>.point`` and ``<sweep>.finished``."""

    total: int
    index: Optional[int] = None
    item: Any = None


@dataclass(eq=False)
class _Subscription:
    pattern: str
    handler: Handler


class EventBus:
    """
    Asynchronous progress bus for mesh loading and sweeps.

    Subscriptions take fnmatch patterns ("blowup.*") and are called in
    subscription order. Every published event name is counted, so a command
    can report how many points a sweep delivered without subscribing.
    """

    def __init__(self):
        self._subscriptions: List[_Subscription] = []
        self._lock = asyncio.Lock()
        self.published: Counter = Counter()

    async def subscribe(self, pattern: str, handler: Handler):
        async with self._lock:
            self._subscriptions.append(_Subscription(pattern, handler))

    async def unsubscribe(self, handler: Handler) -> int:
        """Drop every subscription of *handler*; returns how many were removed."""
        async with self._lock:
            before = len(self._subscriptions)
            self._subscriptions = [s for s in self._subscriptions if s.handler != handler]
            return before - len(self._subscriptions)

    def count(self, pattern: str = "*") -> int:
        """Number of published events whose name matches *pattern*."""
        return sum(n for name, n in self.published.items() if fnmatch.fnmatch(name, pattern))

    def publish_nowait(self, event: str, payload: Any = None):
        try:
            loop = asyncio.get_running_loop()
        except RuntimeError:
            # plain synchronous caller: count it, nobody can be listening
            self.published[event] += 1
            logger.debug("No event loop for %s; handlers skipped", event)
            return
        loop.create_task(self.publish(event, payload))

    async def publish(self, event: str, payload: Any = None):
        """
        Call every matching handler. Handler failures are logged and do not
        stop delivery to the remaining handlers.
        """
        self.published[event] += 1
        async with self._lock:
            matching = [s for s in self._subscriptions if fnmatch.fnmatch(event, s.pattern)]
        for sub in matching:
            try:
                await sub.handler(payload)
            except Exception:
                logger.exception("Handler for %s failed", event)
