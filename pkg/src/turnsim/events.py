"""Deterministic discrete-event loop on a virtual tick clock."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable

SessionId = Hashable

DEFAULT_EVENT_CAP = 10**6


class LivelockError(RuntimeError):
    """Raised when a run processes more events than the configured cap."""


@dataclass(order=True)
class ScheduledEvent:
    fire_at: int
    seq: int
    id: int = field(compare=False)
    session: SessionId = field(compare=False, default=None)
    payload: Any = field(compare=False, default=None)


def _call_payload(event: ScheduledEvent) -> None:
    if callable(event.payload):
        event.payload()


class EventLoop:
    """Single-threaded scheduler ordered by ``(fire_at, seq)``.

    Events are delivered to ``handler`` (by default the payload is called if it
    is callable).  Delivered ``(fire_at, seq, session)`` triples are kept in
    :attr:`trace` for determinism checks.
    """

    def __init__(
        self,
        handler: Callable[[ScheduledEvent], None] | None = None,
        max_events: int = DEFAULT_EVENT_CAP,
    ) -> None:
        self.handler = handler or _call_payload
        self.max_events = max_events
        self.now = 0
        self.trace: list[tuple[int, int, SessionId]] = []
        self._queue: list[ScheduledEvent] = []
        self._pending: dict[int, ScheduledEvent] = {}
        self._seq = itertools.count()
        self._ids = itertools.count(1)
        self._processed = 0

    def schedule(self, payload: Any, delay: int = 0, session: SessionId = None) -> int:
        if delay < 0:
            raise ValueError(f"delay must be non-negative, got {delay}")
        event = ScheduledEvent(
            fire_at=self.now + delay,
            seq=next(self._seq),
            id=next(self._ids),
            session=session,
            payload=payload,
        )
        heapq.heappush(self._queue, event)
        self._pending[event.id] = event
        return event.id

    def schedule_at(self, payload: Any, at: int, session: SessionId = None) -> int:
        return self.schedule(payload, at - self.now, session)

    def cancel(self, event_id: int) -> bool:
        # Lazy deletion: the heap entry stays but is skipped on pop.
        return self._pending.pop(event_id, None) is not None

    def pending(self, event_id: int) -> bool:
        return event_id in self._pending

    def __len__(self) -> int:
        return len(self._pending)

    def step(self) -> ScheduledEvent | None:
        """Deliver the next live event, or return None when idle."""
        while self._queue:
            event = heapq.heappop(self._queue)
            if self._pending.pop(event.id, None) is None:
                continue
            self._processed += 1
            if self._processed > self.max_events:
                raise LivelockError(
                    f"more than {self.max_events} events processed; last at t={event.fire_at}"
                )
            self.now = event.fire_at
            self.trace.append((event.fire_at, event.seq, event.session))
            self.handler(event)
            return event
        return None

    def run_until_idle(self) -> int:
        while self.step() is not None:
            pass
        return self.now
