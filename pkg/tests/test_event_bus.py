import asyncio
from core.event_bus import EventBus


def test_publish_subscribe():
    async def main():
        bus = EventBus()
        result = []

        async def handler(payload):
            result.append(payload)

        await bus.subscribe('test.event', handler)
        await bus.publish('test.event', 42)
        return result

    res = asyncio.run(main())
    assert res == [42]


def test_patterns_keep_subscription_order():
    async def main():
        bus = EventBus()
        calls = []

        async def first(payload):
            calls.append(('first', payload))

        async def second(payload):
            calls.append(('second', payload))

        await bus.subscribe('sweep.*', first)
        await bus.subscribe('sweep.point', second)
        await bus.publish('sweep.point', 1)
        await bus.publish('sweep.started', 2)
        await bus.publish('mesh.loaded', 3)
        return calls

    calls = asyncio.run(main())
    assert calls == [('first', 1), ('second', 1), ('first', 2)]


def test_failing_handler_does_not_stop_delivery():
    async def main():
        bus = EventBus()
        result = []

        async def broken(payload):
            raise RuntimeError('boom')

        async def handler(payload):
            result.append(payload)

        await bus.subscribe('x', broken)
        await bus.subscribe('x', handler)
        await bus.publish('x', 'ok')
        return result

    assert asyncio.run(main()) == ['ok']


def test_unsubscribe_and_counts():
    async def main():
        bus = EventBus()
        calls = []

        async def handler(payload):
            calls.append(payload)

        await bus.subscribe('mesh.*', handler)
        await bus.subscribe('mesh.loaded', handler)
        await bus.publish('mesh.loaded', 'disk4')
        removed = await bus.unsubscribe(handler)
        await bus.publish('mesh.loaded', 'disk8')
        return calls, removed, bus

    calls, removed, bus = asyncio.run(main())
    assert calls == ['disk4', 'disk4']
    assert removed == 2
    assert bus.count('mesh.loaded') == 2
    assert bus.count() == 2


def test_unsubscribe_bound_method():
    class Listener:
        def __init__(self):
            self.seen = []

        async def on_event(self, payload):
            self.seen.append(payload)

    async def main(listener):
        bus = EventBus()
        await bus.subscribe('x', listener.on_event)
        await bus.publish('x', 1)
        removed = await bus.unsubscribe(listener.on_event)
        await bus.publish('x', 2)
        return removed

    listener = Listener()
    assert asyncio.run(main(listener)) == 1
    assert listener.seen == [1]


def test_publish_nowait_without_loop_still_counts():
    bus = EventBus()
    bus.publish_nowait('mesh.loaded', 'disk4')
    assert bus.count('mesh.*') == 1
