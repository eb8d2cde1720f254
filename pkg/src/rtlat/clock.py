"""64-bit 32.32 timestamps and per-endpoint clock offsets.

Simulation time is an integer count of nanoseconds since scenario start.
Timestamps convert to and from that count without loss: one fraction unit
is ~0.233 ns, so ``to_ns(from_ns(x)) == x`` for every non-negative ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import total_ordering

NS_PER_S = 1_000_000_000
FRAC_ONE = 1 << 32
U32_MAX = (1 << 32) - 1


@total_ordering
@dataclass(frozen=True)
class Timestamp64:
    seconds: int
    fraction: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.seconds <= U32_MAX:
            raise ValueError(f"seconds out of u32 range: {self.seconds}")
        if not 0 <= self.fraction <= U32_MAX:
            raise ValueError(f"fraction out of u32 range: {self.fraction}")

    def __lt__(self, other: Timestamp64) -> bool:
        if not isinstance(other, Timestamp64):
            return NotImplemented
        return (self.seconds, self.fraction) < (other.seconds, other.fraction)

    @property
    def as_u64(self) -> int:
        return (self.seconds << 32) | self.fraction

    @classmethod
    def from_u64(cls, value: int) -> Timestamp64:
        return cls(value >> 32, value & U32_MAX)

    @classmethod
    def from_ns(cls, ns: int) -> Timestamp64:
        if ns < 0:
            raise ValueError("timestamps before the scenario epoch are not representable")
        secs, rem = divmod(ns, NS_PER_S)
        # round-half-up; rem <= 999_999_999 keeps the fraction below 2**32
        frac = (rem * FRAC_ONE + NS_PER_S // 2) // NS_PER_S
        return cls(secs, frac)

    def to_ns(self) -> int:
        return self.seconds * NS_PER_S + (self.fraction * NS_PER_S + FRAC_ONE // 2) // FRAC_ONE

    @classmethod
    def from_seconds(cls, seconds: float) -> Timestamp64:
        return cls.from_ns(round(seconds * NS_PER_S))

    def to_seconds(self) -> float:
        return self.seconds + self.fraction / FRAC_ONE


def diff_ns(later: Timestamp64, earlier: Timestamp64) -> int:
    return later.to_ns() - earlier.to_ns()


def diff_ms(later: Timestamp64, earlier: Timestamp64) -> float:
    """Signed ``later - earlier`` in milliseconds.

    Negative values are returned unchanged; callers treat them as a clock
    skew indicator rather than an error.
    """
    return diff_ns(later, earlier) / 1e6


class ClockId(str, Enum):
    SENDER = "sender"
    RECEIVER = "receiver"


@dataclass(frozen=True)
class ClockPair:
    """Constant offsets (ns) of the sender and receiver clocks from true time."""

    sender_offset: int = 0
    receiver_offset: int = 0

    @classmethod
    def from_ms(cls, sender_ms: float = 0.0, receiver_ms: float = 0.0) -> ClockPair:
        return cls(round(sender_ms * 1e6), round(receiver_ms * 1e6))

    def offset(self, clock_id: ClockId | str) -> int:
        clock_id = ClockId(clock_id)
        return self.sender_offset if clock_id is ClockId.SENDER else self.receiver_offset

    def now_ns(self, clock_id: ClockId | str, true_ns: int) -> int:
        return true_ns + self.offset(clock_id)

    def now(self, clock_id: ClockId | str, true_ns: int) -> Timestamp64:
        return Timestamp64.from_ns(self.now_ns(clock_id, true_ns))


def to_ticks(ns: int, clock_rate: int) -> int:
    """Whole ticks of a ``clock_rate`` Hz clock elapsed after ``ns`` nanoseconds."""
    return ns * clock_rate // NS_PER_S
