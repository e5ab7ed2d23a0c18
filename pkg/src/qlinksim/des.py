"""Discrete-event simulation kernel with integer nanosecond time."""
from __future__ import annotations

import heapq
from typing import Any, Callable


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current time."""


class EventHandle:
    """Handle for a scheduled callback; ``cancel`` leaves a tombstone."""

    __slots__ = ("time", "priority", "seq", "callback", "args", "target", "cancelled")

    def __init__(self, time: int, priority: int, seq: int, callback: Callable[..., Any], args: tuple,
                 target: Any):
        self.time = time
        self.priority = priority
        self.seq = seq
        self.callback = callback
        self.args = args
        self.target = target
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "EventHandle") -> bool:
        return (self.time, self.priority, self.seq) < (other.time, other.priority, other.seq)


class Simulator:
    """Ordered event queue.

    Events fire in (time, priority, insertion order); lower priority values
    fire first. Cancelled events stay in the heap and are skipped when popped.
    """

    def __init__(self) -> None:
        self.now = 0
        self._heap: list[EventHandle] = []
        self._seq = 0
        self.events_fired = 0

    def schedule(self, time: int, callback: Callable[..., Any], *args: Any, target: Any = None,
                 priority: int = 1) -> EventHandle:
        """Schedule ``callback(*args)`` at absolute time ``time`` (ns)."""
        time = int(time)
        if time < self.now:
            raise SchedulingError(f"cannot schedule at {time} ns, now is {self.now} ns")
        h = EventHandle(time, priority, self._seq, callback, args, target)
        self._seq += 1
        heapq.heappush(self._heap, h)
        return h

    def schedule_in(self, delay: int, callback: Callable[..., Any], *args: Any, target: Any = None,
                    priority: int = 1) -> EventHandle:
        return self.schedule(self.now + int(delay), callback, *args, target=target, priority=priority)

    def _prune(self) -> None:
        heap = self._heap
        while heap and heap[0].cancelled:
            heapq.heappop(heap)

    def peek_time(self) -> int | None:
        """Time of the next live event, or None."""
        self._prune()
        return self._heap[0].time if self._heap else None

    def pending(self) -> list[EventHandle]:
        """Live pending events, unordered."""
        return [h for h in self._heap if not h.cancelled]

    def step(self) -> bool:
        """Fire the next live event. Returns False when the queue is empty."""
        self._prune()
        if not self._heap:
            return False
        h = heapq.heappop(self._heap)
        self.now = h.time
        self.events_fired += 1
        h.callback(*h.args)
        return True

    def run_until(self, t_end: int) -> int:
        """Fire every event with time <= ``t_end``, then set now to ``t_end``.

        Returns the number of events dispatched.
        """
        t_end = int(t_end)
        if t_end < self.now:
            raise SchedulingError(f"cannot run back to {t_end} ns, now is {self.now} ns")
        heap = self._heap
        fired = 0
        while True:
            self._prune()
            if not heap or heap[0].time > t_end:
                break
            h = heapq.heappop(heap)
            self.now = h.time
            self.events_fired += 1
            fired += 1
            h.callback(*h.args)
        self.now = t_end
        return fired

    def run(self) -> None:
        while self.step():
            pass
