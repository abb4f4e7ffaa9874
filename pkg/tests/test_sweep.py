import asyncio
import logging

import pytest

from core.event_bus import EventBus, SweepProgress
from lab.sweep import SweepRunner


def test_map_preserves_order():
    runner = SweepRunner(max_workers=4)
    assert runner.map(lambda x: x * x, range(10)) == [x * x for x in range(10)]


def test_empty_sweep():
    assert SweepRunner().map(str, []) == []


def test_progress_events():
    async def main():
        bus = EventBus()
        seen = []

        async def handler(payload):
            seen.append(payload)

        await bus.subscribe('blowup.*', handler)
        runner = SweepRunner(bus, max_workers=2, name='blowup')
        results = await runner.run_async(lambda x: x + 1, [1, 2, 3])
        return results, seen

    results, seen = asyncio.run(main())
    assert results == [2, 3, 4]
    assert seen[0] == seen[-1] == SweepProgress(3)
    assert sorted(p.index for p in seen[1:-1]) == [0, 1, 2]
    assert sorted(p.item for p in seen[1:-1]) == [1, 2, 3]


def test_bus_counts_delivered_points():
    bus = EventBus()
    SweepRunner(bus, name='verify-bounds').map(abs, [-1, 2, -3, 4])
    assert bus.count('verify-bounds.point') == 4
    assert bus.count('verify-bounds.*') == 6
    assert bus.count('blowup.*') == 0


def test_progress_logger_lives_for_one_run(caplog):
    bus = EventBus()
    runner = SweepRunner(bus, max_workers=2, name='blowup')
    with caplog.at_level(logging.DEBUG, logger='lab.sweep'):
        runner.map(abs, [-1, -2, -3])
    assert 'blowup point 3/3 done' in caplog.text
    assert asyncio.run(bus.unsubscribe(runner._log_progress)) == 0


def test_failed_point_still_unsubscribes():
    bus = EventBus()
    runner = SweepRunner(bus, name='blowup')
    with pytest.raises(ZeroDivisionError):
        runner.map(lambda x: 1 / x, [1, 0])
    assert asyncio.run(bus.unsubscribe(runner._log_progress)) == 0
    assert bus.count('blowup.finished') == 0
