"""Deterministic discrete-event link model.

A link is a byte-limited tail-drop FIFO in front of a serializer running at
the current bandwidth, followed by a fixed propagation delay plus an optional
uniform delay jitter. Bernoulli loss is applied to packets as they leave the
serializer, so lost packets still consume capacity. All randomness comes from
a seeded Mersenne Twister (``random.Random``), whose output is stable across
platforms and Python versions.
"""

from __future__ import annotations

import bisect
import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from .clock import NS_PER_S

IP_UDP_OVERHEAD = 28

# Radio attenuation (dB) -> usable bandwidth (bit/s); 60 dB means the link is gone.
ATTENUATION_PRESET: dict[float, float] = {
    10: 53.2e6,
    20: 53.3e6,
    30: 43.3e6,
    40: 39.5e6,
    45: 31.7e6,
    50: 21.7e6,
    55: 18.0e6,
    60: 0.0,
}


class EventLoop:
    """Min-heap of timed callbacks; equal times run in insertion order."""

    def __init__(self) -> None:
        self.now = 0
        self._heap: list[tuple[int, int, Callable[..., Any], tuple]] = []
        self._counter = 0
        self.processed = 0

    def schedule(self, at_ns: int, callback: Callable[..., Any], *args: Any) -> None:
        if at_ns < self.now:
            raise ValueError(f"cannot schedule in the past ({at_ns} < {self.now})")
        heapq.heappush(self._heap, (at_ns, self._counter, callback, args))
        self._counter += 1

    def run_until(self, end_ns: int) -> None:
        heap = self._heap
        while heap and heap[0][0] <= end_ns:
            t, _, cb, args = heapq.heappop(heap)
            self.now = t
            self.processed += 1
            cb(*args)
        self.now = max(self.now, end_ns)

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class LinkConfig:
    bandwidth: float = 12e6
    propagation_delay_ms: float = 10.0
    queue_capacity: int = 250_000
    loss_prob: float = 0.0
    delay_jitter_ms: float = 0.0
    seed: int = 1
    overhead_bytes: int = IP_UDP_OVERHEAD

    def __post_init__(self) -> None:
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be >= 0")
        if self.queue_capacity <= 0:
            raise ValueError("queue_capacity must be > 0")
        if not 0 <= self.loss_prob <= 1:
            raise ValueError("loss_prob must be in [0, 1]")
        if self.propagation_delay_ms < 0 or self.delay_jitter_ms < 0:
            raise ValueError("delays must be >= 0")


@dataclass(frozen=True)
class ScheduleStep:
    at: float  # seconds of simulated time
    bandwidth: float  # bit/s


def validate_schedule(schedule: Sequence[ScheduleStep]) -> None:
    times = [s.at for s in schedule]
    if times != sorted(times) or len(set(times)) != len(times):
        raise ValueError("schedule steps must be sorted by time with unique times")
    if any(s.bandwidth < 0 for s in schedule):
        raise ValueError("schedule bandwidth must be >= 0")


def bandwidth_at(schedule: Sequence[ScheduleStep], t_s: float, default: float) -> float:
    idx = bisect.bisect_right([s.at for s in schedule], t_s) - 1
    return schedule[idx].bandwidth if idx >= 0 else default


def attenuation_to_bandwidth(db: float, table: dict[float, float] | None = None) -> float:
    """Interpolate usable bandwidth for an attenuation, clamped at the table ends."""
    if db < 0:
        raise ValueError("attenuation must be >= 0 dB")
    table = ATTENUATION_PRESET if table is None else table
    points = sorted(table.items())
    if db <= points[0][0]:
        return points[0][1]
    if db >= points[-1][0]:
        return points[-1][1]
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        if x0 <= db <= x1:
            if db == x1:
                return y1
            return y0 + (y1 - y0) * (db - x0) / (x1 - x0)
    raise AssertionError("unreachable")


def serialization_ns(size_bytes: int, bandwidth: float) -> int:
    """Time to clock ``size_bytes`` onto a ``bandwidth`` bit/s wire, rounded up to 1 ns."""
    bps = round(bandwidth)
    return -(-size_bytes * 8 * NS_PER_S // bps)


@dataclass
class LinkCounters:
    sent: int = 0
    delivered: int = 0
    dropped_loss: int = 0
    dropped_overflow: int = 0
    bytes_delivered: int = 0


@dataclass
class _Queued:
    payload: Any
    size: int
    sent_ns: int


class Link:
    """One direction of a simulated channel bound to an :class:`EventLoop`.

    ``deliver(payload, arrival_ns)`` is called for every packet that makes it
    through. ``send`` returns ``False`` on a tail drop.
    """

    def __init__(
        self,
        loop: EventLoop,
        config: LinkConfig,
        deliver: Callable[[Any, int], None],
        *,
        name: str = "link",
    ) -> None:
        self.loop = loop
        self.config = config
        self.deliver = deliver
        self.name = name
        self.bandwidth = float(config.bandwidth)
        self._prop_ns = round(config.propagation_delay_ms * 1e6)
        self._jitter_ns = round(config.delay_jitter_ms * 1e6)
        self._rng = random.Random(config.seed)
        self._queue: deque[_Queued] = deque()
        self.queued_bytes = 0
        self._busy = False
        self.in_flight = 0
        self.counters = LinkCounters()
        self._idle_since: int | None = 0
        self.idle_intervals: list[tuple[int, int]] = []
        self.trace: list[tuple[int, str, int]] | None = None
        self._area = 0  # integral of queued bytes over time, byte*ns
        self._area_t = 0

    def _account(self) -> None:
        now = self.loop.now
        self._area += self.queued_bytes * (now - self._area_t)
        self._area_t = now

    def queue_area(self) -> int:
        """Integral of queued bytes up to the current loop time (byte*ns)."""
        return self._area + self.queued_bytes * (self.loop.now - self._area_t)

    def wire_size(self, payload: Any) -> int:
        return len(payload) + self.config.overhead_bytes

    @property
    def queued_packets(self) -> int:
        return len(self._queue)

    def _log(self, kind: str, size: int) -> None:
        if self.trace is not None:
            self.trace.append((self.loop.now, kind, size))

    def send(self, payload: Any, size: int | None = None) -> bool:
        size = self.wire_size(payload) if size is None else size
        now = self.loop.now
        self.counters.sent += 1
        if self.queued_bytes + size > self.config.queue_capacity:
            self.counters.dropped_overflow += 1
            self._log("overflow", size)
            return False
        self._account()
        self._queue.append(_Queued(payload, size, now))
        self.queued_bytes += size
        self._log("enqueue", size)
        if self._idle_since is not None:
            if now > self._idle_since:
                self.idle_intervals.append((self._idle_since, now))
            self._idle_since = None
        if not self._busy:
            self._start_next()
        return True

    def set_bandwidth(self, bandwidth: float) -> None:
        """Change capacity now; a packet already on the wire finishes at the old rate."""
        if bandwidth < 0:
            raise ValueError("bandwidth must be >= 0")
        self.bandwidth = float(bandwidth)
        self._log("bandwidth", round(bandwidth))
        if not self._busy and self._queue:
            self._start_next()

    def _start_next(self) -> None:
        if not self._queue or self.bandwidth <= 0:
            self._busy = False
            return
        self._busy = True
        head = self._queue[0]
        self.loop.schedule(self.loop.now + serialization_ns(head.size, self.bandwidth), self._depart)

    def _depart(self) -> None:
        self._account()
        pkt = self._queue.popleft()
        self.queued_bytes -= pkt.size
        self._busy = False
        now = self.loop.now
        cfg = self.config
        if cfg.loss_prob > 0 and self._rng.random() < cfg.loss_prob:
            self.counters.dropped_loss += 1
            self._log("loss", pkt.size)
        else:
            delay = self._prop_ns
            if self._jitter_ns:
                delay += self._rng.randint(0, self._jitter_ns)
            self.in_flight += 1
            self.loop.schedule(now + delay, self._arrive, pkt)
        if self._queue:
            self._start_next()
        else:
            self._idle_since = now

    def _arrive(self, pkt: _Queued) -> None:
        self.in_flight -= 1
        self.counters.delivered += 1
        self.counters.bytes_delivered += pkt.size
        self._log("arrive", pkt.size)
        self.deliver(pkt.payload, self.loop.now)

    def idle_ns(self, start_ns: int, end_ns: int) -> int:
        """Time within [start_ns, end_ns) with nothing queued or serializing."""
        total = 0
        spans = list(self.idle_intervals)
        if self._idle_since is not None:
            spans.append((self._idle_since, max(end_ns, self._idle_since)))
        for a, b in spans:
            lo, hi = max(a, start_ns), min(b, end_ns)
            if hi > lo:
                total += hi - lo
        return total

    def check_conservation(self) -> bool:
        c = self.counters
        return c.sent == (
            c.delivered + c.dropped_loss + c.dropped_overflow + len(self._queue) + self.in_flight
        )
