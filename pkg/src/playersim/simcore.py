"""Deterministic virtual-time event scheduler.

All device models share one clock. Time is integer microseconds; ties
dispatch in insertion order, so two runs with the same inputs produce the
same event sequence.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, List


class PastEventError(ValueError):
    """Raised when scheduling or advancing into the past."""


@dataclass(order=True)
class Event:
    fire_at: int
    seq: int
    event_id: int = field(compare=False)
    payload: Any = field(compare=False)


class VirtualClock:
    """Monotonic microsecond counter owned by the scheduler."""

    __slots__ = ("_now",)

    def __init__(self, start_us: int = 0):
        self._now = int(start_us)

    @property
    def now(self) -> int:
        return self._now

    def _set(self, t: int) -> None:
        if t < self._now:
            raise PastEventError(f"clock cannot move backward: {t} < {self._now}")
        self._now = t


class Scheduler:
    """Event queue driving every device model in (fire_at, seq) order.

    Payloads are opaque; callables are invoked with the Event when they
    fire.  ``advance`` may be re-entered from inside a callback (a bus
    transfer consuming time does exactly that) — popped events never
    re-fire, so nesting stays deterministic.
    """

    def __init__(self, start_us: int = 0):
        self.clock = VirtualClock(start_us)
        self._heap: List[Event] = []
        self._seq = 0
        self._next_id = 1

    @property
    def now(self) -> int:
        return self.clock.now

    def schedule(self, at: int, payload: Any) -> int:
        """Enqueue an event at absolute time ``at`` (µs). Returns its id."""
        at = int(at)
        if at < self.now:
            raise PastEventError(f"cannot schedule at {at}, clock is at {self.now}")
        event = Event(fire_at=at, seq=self._seq, event_id=self._next_id, payload=payload)
        self._seq += 1
        self._next_id += 1
        heapq.heappush(self._heap, event)
        return event.event_id

    def schedule_in(self, delay_us: int, payload: Any) -> int:
        return self.schedule(self.now + int(delay_us), payload)

    def pending(self) -> int:
        return len(self._heap)

    def advance(self, until: int) -> List[Event]:
        """Dispatch every event with fire_at <= until; leave clock at until."""
        until = int(until)
        if until < self.now:
            raise PastEventError(f"cannot advance to {until}, clock is at {self.now}")
        fired: List[Event] = []
        while self._heap and self._heap[0].fire_at <= until:
            event = heapq.heappop(self._heap)
            # A nested advance from a callback may already have moved past
            # this event's timestamp; never step the clock backward.
            if event.fire_at > self.now:
                self.clock._set(event.fire_at)
            fired.append(event)
            if callable(event.payload):
                event.payload(event)
        if until > self.now:
            self.clock._set(until)
        return fired

    def advance_by(self, delta_us: int) -> List[Event]:
        return self.advance(self.now + int(delta_us))
