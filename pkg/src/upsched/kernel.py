"""Discrete-event time engine.

Time is an integer number of nanosecond ticks. Events fire in
``(fire_at, phase, seq)`` order where ``seq`` is the global issue counter,
so no two events ever compare equal. The phase class lets the network layer
run every same-tick arrival before any same-tick scheduling decision.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Any, Callable

__all__ = ["Kernel", "Event", "KernelStats", "SchedulingError", "PHASE_ARRIVAL", "PHASE_DECIDE"]

PHASE_ARRIVAL = 0
PHASE_DECIDE = 1


class SchedulingError(RuntimeError):
    """An event was scheduled before the current simulation time."""


class Event:
    __slots__ = ("fire_at", "phase", "seq", "fn", "args", "kind", "cancelled", "fired")

    def __init__(self, fire_at: int, phase: int, seq: int, fn: Callable, args: tuple, kind: str):
        self.fire_at = fire_at
        self.phase = phase
        self.seq = seq
        self.fn = fn
        self.args = args
        self.kind = kind
        self.cancelled = False
        self.fired = False

    def __repr__(self):
        return f"Event({self.kind}@{self.fire_at}#{self.seq})"


@dataclass(frozen=True)
class KernelStats:
    fired: int
    cancelled: int
    pending: int
    now: int


class Kernel:
    """Event calendar with tombstone cancellation.

    >>> k = Kernel()
    >>> seen = []
    >>> _ = k.schedule(5, seen.append, "b")
    >>> _ = k.schedule(5, seen.append, "c")
    >>> _ = k.schedule(1, seen.append, "a")
    >>> k.run_until(10).fired
    3
    >>> seen
    ['a', 'b', 'c']
    """

    def __init__(self, trace: bool = False):
        self.now = 0
        self._heap: list = []
        self._seq = 0
        self._fired = 0
        self._cancelled = 0
        self.trace: list[tuple[int, int, str]] | None = [] if trace else None

    def schedule(self, fire_at: int, fn: Callable, *args: Any, phase: int = PHASE_ARRIVAL,
                 kind: str = "") -> Event:
        if fire_at < self.now:
            raise SchedulingError(f"cannot schedule at {fire_at}, current time is {self.now}")
        ev = Event(fire_at, phase, self._seq, fn, args, kind)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, phase, ev.seq, ev))
        return ev

    def cancel(self, ev: Event) -> bool:
        """Cancel ``ev``; returns False if it already fired or was cancelled."""
        if ev.fired or ev.cancelled:
            return False
        ev.cancelled = True
        self._cancelled += 1
        return True

    def __len__(self):
        return len(self._heap)

    def peek_time(self) -> int | None:
        while self._heap and self._heap[0][3].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def run_until(self, t_end: int | None = None) -> KernelStats:
        """Fire every pending event with ``fire_at <= t_end`` (all if None)."""
        heap = self._heap
        pop = heapq.heappop
        trace = self.trace
        while heap:
            entry = heap[0]
            if t_end is not None and entry[0] > t_end:
                break
            pop(heap)
            ev = entry[3]
            if ev.cancelled:
                continue
            self.now = entry[0]
            ev.fired = True
            self._fired += 1
            if trace is not None:
                trace.append((ev.fire_at, ev.seq, ev.kind))
            ev.fn(*ev.args)
        if t_end is not None and t_end > self.now:
            self.now = t_end
        return self.stats()

    def stats(self) -> KernelStats:
        pending = sum(1 for e in self._heap if not e[3].cancelled)
        return KernelStats(self._fired, self._cancelled, pending, self.now)
