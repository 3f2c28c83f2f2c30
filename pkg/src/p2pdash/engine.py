"""Deterministic discrete-event core: virtual clock, event queue, seeded streams.

Time is continuous (seconds, floats).  Events fire in (fire_at, seq) order,
where seq is the global insertion counter, so simultaneous events run in the
order they were scheduled.  Randomness is split into labeled substreams that
are independent of each other: drawing from one stream never shifts the
sequence of another, which keeps runs reproducible when components are added
or reordered.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current virtual time."""


class Event:
    """Handle for a scheduled callback; cancel() makes it a no-op."""

    __slots__ = ("fire_at", "seq", "callback", "cancelled")

    def __init__(self, fire_at, seq, callback):
        self.fire_at = fire_at
        self.seq = seq
        self.callback = callback
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


@dataclass
class RunStats:
    events_fired: int
    end_time: float


def draw_exponential(rng: random.Random, mean: float) -> float:
    """One exponential draw with the given mean (must be positive)."""
    if not mean > 0:
        raise ValueError(f"exponential mean must be positive, got {mean}")
    return rng.expovariate(1.0 / mean)


class Engine:
    """Priority-queue event loop with a root seed and labeled substreams."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now = 0.0
        self.events_fired = 0
        self._heap: list[tuple[float, int, Event]] = []
        self._seq = 0
        self._streams: dict[str, random.Random] = {}

    def stream(self, label: str) -> random.Random:
        """Return the stream for a label, creating it on first use.

        Substream seeds derive from (root seed, label) only, never from the
        order of first use.
        """
        rng = self._streams.get(label)
        if rng is None:
            rng = random.Random(f"{self.seed}:{label}")
            self._streams[label] = rng
        return rng

    def schedule(self, fire_at: float, callback) -> Event:
        if fire_at < self.now:
            raise SchedulingError(
                f"cannot schedule at {fire_at} before current time {self.now}"
            )
        event = Event(fire_at, self._seq, callback)
        self._seq += 1
        heapq.heappush(self._heap, (fire_at, event.seq, event))
        return event

    def schedule_after(self, delay: float, callback) -> Event:
        return self.schedule(self.now + delay, callback)

    def peek_time(self):
        """Fire time of the next live event, or None if the queue is empty."""
        while self._heap and self._heap[0][2].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def run_until(self, t_end: float) -> RunStats:
        """Fire events with fire_at <= t_end, then advance the clock to t_end."""
        heap = self._heap
        while heap:
            fire_at, _seq, event = heap[0]
            if fire_at > t_end:
                break
            heapq.heappop(heap)
            if event.cancelled:
                continue
            self.now = fire_at
            self.events_fired += 1
            event.callback()
        self.now = t_end
        return RunStats(events_fired=self.events_fired, end_time=t_end)
