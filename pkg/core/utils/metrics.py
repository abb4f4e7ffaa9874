# File: core/utils/metrics.py

"""Lightweight in-process counters."""

from __future__ import annotations


class Counter:
    """Simple integer counter."""

    def __init__(self) -> None:
        self.value = 0

    def inc(self, amount: int = 1) -> None:
        """Increase counter by *amount*."""

        self.value += amount

    def get(self) -> int:
        """Return current value."""

        return self.value


class EvaluationBudget(Counter):
    """Counter with a hard ceiling, shared by the phases of a search."""

    def __init__(self, limit: int) -> None:
        super().__init__()
        self.limit = int(limit)

    @property
    def remaining(self) -> int:
        return max(self.limit - self.value, 0)

    @property
    def exhausted(self) -> bool:
        return self.value >= self.limit

    def take(self, amount: int = 1) -> bool:
        """Consume *amount* evaluations; False if that would exceed the limit."""

        if self.value + amount > self.limit:
            return False
        self.inc(amount)
        return True
