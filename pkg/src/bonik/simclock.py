"""Two interchangeable clocks behind the network simulator.

VirtualClock is a discrete-event engine: time is a number that only moves
when events are processed, which makes benchmark runs deterministic and
lets a 60-second experiment finish in milliseconds. ImmediateClock backs
the interactive gateway: now() is the wall clock and scheduled callbacks
run on the spot, so modeled latencies collapse and a chat request commits
before its HTTP handler returns.

Both expose now() in milliseconds and schedule(delay_ms, fn).
"""
from __future__ import annotations

import heapq
import time
from typing import Callable, List, Optional, Tuple


class ClockError(Exception):
    pass


class VirtualClock:
    """Min-heap event queue over virtual milliseconds.

    Events fire in timestamp order; equal timestamps fire in scheduling
    order (a monotone sequence number breaks ties), so runs with the same
    inputs replay identically.
    """

    def __init__(self, start_ms: float = 0.0):
        self._now = float(start_ms)
        self._seq = 0
        self._events: List[Tuple[float, int, Callable[[], None]]] = []

    def now(self) -> float:
        return self._now

    def schedule(self, delay_ms: float, fn: Callable[[], None]) -> None:
        if delay_ms < 0:
            raise ClockError("cannot schedule into the past")
        self.schedule_at(self._now + delay_ms, fn)

    def schedule_at(self, at_ms: float, fn: Callable[[], None]) -> None:
        if at_ms < self._now:
            raise ClockError("cannot schedule into the past")
        heapq.heappush(self._events, (float(at_ms), self._seq, fn))
        self._seq += 1

    def next_event_at(self) -> Optional[float]:
        return self._events[0][0] if self._events else None

    def advance_until(self, until_ms: float) -> int:
        """Run every event with timestamp <= until_ms, then land the clock
        exactly on until_ms. Returns how many events ran. Callbacks may
        schedule further events, including inside the window."""
        if until_ms < self._now:
            raise ClockError("cannot advance backwards")
        ran = 0
        while self._events and self._events[0][0] <= until_ms:
            at, _, fn = heapq.heappop(self._events)
            self._now = at
            fn()
            ran += 1
        self._now = float(until_ms)
        return ran

    def run_until_idle(self, event_limit: int = 10_000_000) -> int:
        """Drain the queue completely; the limit guards against runaway
        self-rescheduling loops."""
        ran = 0
        while self._events:
            if ran >= event_limit:
                raise ClockError(f"exceeded {event_limit} events without going idle")
            at, _, fn = heapq.heappop(self._events)
            self._now = at
            fn()
            ran += 1
        return ran


class ImmediateClock:
    """Wall-clock time, zero-delay execution: schedule() calls fn() before
    returning. Suitable only for the interactive path, where modeled
    network latencies are noise rather than the measurand."""

    def now(self) -> float:
        return time.time() * 1000.0

    def schedule(self, delay_ms: float, fn: Callable[[], None]) -> None:
        if delay_ms < 0:
            raise ClockError("cannot schedule into the past")
        fn()

    def schedule_at(self, at_ms: float, fn: Callable[[], None]) -> None:
        fn()
