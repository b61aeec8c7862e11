"""Discrete-event kernel: clock, event queue, cancellation and seeded streams.

The kernel knows nothing about robots or bricks. Agents schedule callbacks
and the run loop fires them in ``(fire_time, sequence_no)`` order, so two
events at the same instant always fire in insertion order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np


class SchedulingError(RuntimeError):
    """An agent tried to schedule an event before the current clock."""


class DeadlockError(RuntimeError):
    """The event queue ran dry while work was still outstanding."""

    def __init__(self, message: str, stuck_agents: list[str]):
        super().__init__(message)
        self.stuck_agents = stuck_agents


@dataclass(order=True)
class Event:
    fire_time: float
    sequence_no: int
    target_agent: str = field(compare=False, default="")
    kind: str = field(compare=False, default="timer-expired")
    callback: Callable[[], Any] | None = field(compare=False, default=None, repr=False)
    cancelled: bool = field(compare=False, default=False)
    fired: bool = field(compare=False, default=False)


class EventHandle:
    """Opaque reference returned by :meth:`EventQueue.schedule`."""

    __slots__ = ("_event",)

    def __init__(self, event: Event):
        self._event = event

    @property
    def fire_time(self) -> float:
        return self._event.fire_time

    @property
    def pending(self) -> bool:
        return not (self._event.fired or self._event.cancelled)


class EventQueue:
    """Priority queue of events plus the simulation clock."""

    def __init__(self) -> None:
        self.now = 0.0
        self._heap: list[Event] = []
        self._seq = 0
        self._live = 0

    def __len__(self) -> int:
        return self._live

    def schedule(
        self,
        fire_time: float,
        callback: Callable[[], Any] | None = None,
        target_agent: str = "",
        kind: str = "timer-expired",
    ) -> EventHandle:
        if fire_time < self.now:
            raise SchedulingError(
                f"event for {target_agent or '<anonymous>'} at t={fire_time!r} "
                f"is earlier than the clock t={self.now!r}"
            )
        event = Event(float(fire_time), self._seq, target_agent, kind, callback)
        self._seq += 1
        heapq.heappush(self._heap, event)
        self._live += 1
        return EventHandle(event)

    def schedule_in(self, delay: float, callback: Callable[[], Any] | None = None, **kw: Any) -> EventHandle:
        return self.schedule(self.now + delay, callback, **kw)

    def cancel(self, handle: EventHandle | None) -> bool:
        if handle is None or not handle.pending:
            return False
        handle._event.cancelled = True
        self._live -= 1
        return True

    def peek_time(self) -> float | None:
        self._drop_cancelled()
        return self._heap[0].fire_time if self._heap else None

    def pop(self) -> Event | None:
        """Advance the clock to the next live event and return it (unfired)."""
        self._drop_cancelled()
        if not self._heap:
            return None
        event = heapq.heappop(self._heap)
        self.now = event.fire_time
        event.fired = True
        self._live -= 1
        return event

    def step(self) -> Event | None:
        event = self.pop()
        if event is not None and event.callback is not None:
            event.callback()
        return event

    def _drop_cancelled(self) -> None:
        while self._heap and self._heap[0].cancelled:
            heapq.heappop(self._heap)


def random_stream(master_seed: int, *stream_id: int) -> np.random.Generator:
    """Independent generator keyed by ``(master_seed, *stream_id)``.

    Uses numpy's ``SeedSequence`` spawn keys, so streams with different ids
    do not overlap and the same key always yields the same draws.
    """
    seq = np.random.SeedSequence(int(master_seed) & (2**64 - 1), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.PCG64(seq))
