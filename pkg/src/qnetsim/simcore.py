"""Discrete-event kernel: virtual clock, event queue, named RNG streams."""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import deque
from typing import Any, Callable, NamedTuple


class SimulationError(RuntimeError):
    """Fatal logic error inside a running simulation.

    When raised from a handler, ``recent_events`` holds trace lines of the
    events leading up to the failure, the failing one last.
    """

    recent_events: list[str] = []


class Event(NamedTuple):
    # Tuple ordering gives (fire_time, seq) comparison in C; seq is unique so
    # the handler is never compared.
    fire_time: float
    seq: int
    handler: Callable[..., Any]
    args: tuple

    @property
    def kind(self) -> str:
        return getattr(self.handler, "__name__", repr(self.handler))


def stream_seed(seed: int, stream_id: str) -> int:
    """Derive a 64-bit seed for a named stream, stable across platforms."""
    digest = hashlib.sha256(f"{int(seed)}/{stream_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class RngStream(random.Random):
    """A Mersenne Twister stream keyed by ``(seed, stream_id)``."""

    def __new__(cls, seed: int, stream_id: str):
        return super().__new__(cls)

    def __init__(self, seed: int, stream_id: str):
        self.root_seed = int(seed)
        self.stream_id = stream_id
        super().__init__(stream_seed(seed, stream_id))

    def __reduce__(self):
        return (self.__class__, (self.root_seed, self.stream_id), self.getstate())

    def __setstate__(self, state):
        self.setstate(state)


class Simulator:
    """Single-threaded event loop.

    Handlers are plain callables; ``schedule`` stores them with their
    positional arguments and they run when the clock reaches their time.
    """

    def __init__(self, seed: int = 0, trace: bool = False):
        self.seed = int(seed)
        self.now = 0.0
        self._queue: list[Event] = []
        self._counter = 0
        self._streams: dict[str, RngStream] = {}
        self.events_fired = 0
        self.trace: list[str] | None = [] if trace else None
        self.post_event_hooks: list[Callable[[Event], None]] = []
        self.recent: deque[Event] = deque(maxlen=16)

    def rng(self, stream_id: str) -> RngStream:
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = self._streams[stream_id] = RngStream(self.seed, stream_id)
        return stream

    def schedule(self, fire_time: float, handler: Callable[..., Any], *args) -> Event:
        if fire_time < self.now:
            raise SimulationError(
                f"event {getattr(handler, '__name__', handler)!s} scheduled at "
                f"t={fire_time!r} before current clock t={self.now!r}"
            )
        ev = Event(fire_time, self._counter, handler, args)
        self._counter += 1
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_in(self, delay: float, handler: Callable[..., Any], *args) -> Event:
        return self.schedule(self.now + delay, handler, *args)

    def pending(self) -> int:
        return len(self._queue)

    def peek_time(self) -> float | None:
        return self._queue[0].fire_time if self._queue else None

    def run_until(self, end: float) -> None:
        if end < self.now:
            raise SimulationError(f"run_until({end!r}) is before clock {self.now!r}")
        queue = self._queue
        pop = heapq.heappop
        trace = self.trace
        hooks = self.post_event_hooks
        recent = self.recent.append
        fired = self.events_fired
        try:
            while queue and queue[0][0] <= end:
                ev = pop(queue)
                self.now = ev[0]
                fired += 1
                recent(ev)
                if trace is not None:
                    trace.append(_trace_line(ev))
                ev[2](*ev[3])
                for hook in hooks:
                    hook(ev)
        except SimulationError as exc:
            exc.recent_events = [_trace_line(e) for e in self.recent]
            raise
        finally:
            self.events_fired = fired
        self.now = end


def _trace_line(ev: Event) -> str:
    parts = [repr(ev.fire_time), ev.kind]
    for a in ev.args:
        if isinstance(a, (int, float, str, tuple)) or a is None:
            parts.append(repr(a))
        else:
            parts.append(getattr(a, "trace_id", type(a).__name__))
    return " ".join(parts)
