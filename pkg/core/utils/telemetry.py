# File: core/utils/telemetry.py

"""Collect simple runtime timings for log lines."""

from __future__ import annotations

import time


class Stopwatch:
    """Seconds elapsed since construction."""

    def __init__(self) -> None:
        self.started = time.perf_counter()

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self.started
