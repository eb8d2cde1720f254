"""Receiver statistics and RTCP Receiver Reports.

The RR carries one report block followed by an 8-byte profile-specific
extension holding the 64-bit report time (seconds word, fraction word)::

    |V=2|P|  RC=1   |   PT=RR=201   |          length=9             |
    |                     SSRC of packet sender                     |
    |                 SSRC_1 (SSRC of first source)                 |
    | fraction lost |       cumulative number of packets lost       |
    |           extended highest sequence number received           |
    |                      interarrival jitter                      |
    |                         last SR (LSR)                         |
    |                   delay since last SR (DLSR)                  |
    |                  report time, seconds word                    |
    |                  report time, fraction word                   |
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .clock import Timestamp64

RTCP_RR = 201
RR_SIZE = 40
DEFAULT_CLOCK_RATE = 90_000

_RR = struct.Struct("!BBHII B3s IIII II")


class RtcpError(ValueError):
    pass


class TruncatedPacket(RtcpError):
    pass


class BadPacketType(RtcpError):
    pass


@dataclass
class ReceptionStats:
    """Per-source receive state, following the RFC 3550 appendix A layout.

    ``jitter_q4`` holds the interarrival jitter scaled by 16 so the 1/16 gain
    of the recurrence is kept exactly in integers.
    """

    base_seq: int | None = None
    max_seq: int = 0
    cycles: int = 0
    packets_received_total: int = 0
    packets_expected_prior: int = 0
    packets_received_prior: int = 0
    jitter_q4: int = 0
    last_transit: int | None = None

    @property
    def highest_seq_seen(self) -> int:
        return self.cycles + self.max_seq

    @property
    def expected_total(self) -> int:
        if self.base_seq is None:
            return 0
        return self.highest_seq_seen - self.base_seq + 1

    @property
    def cumulative_lost(self) -> int:
        return self.expected_total - self.packets_received_total

    @property
    def jitter(self) -> float:
        return self.jitter_q4 / 16

    @property
    def jitter_ticks(self) -> int:
        return self.jitter_q4 >> 4


def update_seq(stats: ReceptionStats, seq: int) -> ReceptionStats:
    """Count one received packet, tracking 16-bit wraparound."""
    if stats.base_seq is None:
        stats.base_seq = seq
        stats.max_seq = seq
    else:
        delta = (seq - stats.max_seq) & 0xFFFF
        if 0 < delta < 0x8000:
            if seq < stats.max_seq:
                stats.cycles += 1 << 16
            stats.max_seq = seq
    stats.packets_received_total += 1
    return stats


def update_jitter(stats: ReceptionStats, send_ts_ticks: int, arrival_ticks: int) -> ReceptionStats:
    transit = arrival_ticks - send_ts_ticks
    if stats.last_transit is not None:
        d = abs(transit - stats.last_transit)
        stats.jitter_q4 += d - (stats.jitter_q4 >> 4)
    stats.last_transit = transit
    return stats


def interval_counts(stats: ReceptionStats) -> tuple[int, int]:
    """(expected, received) since the previous report; does not advance it."""
    expected = stats.expected_total - stats.packets_expected_prior
    received = stats.packets_received_total - stats.packets_received_prior
    return expected, received


def fraction_lost(expected_interval: int, received_interval: int) -> int:
    lost = expected_interval - received_interval
    if expected_interval <= 0 or lost <= 0:
        return 0
    return min((lost << 8) // expected_interval, 255)


@dataclass(frozen=True)
class RtcpReceiverReport:
    ssrc: int
    source_ssrc: int
    fraction_lost: int
    cumulative_lost: int
    highest_seq: int
    jitter: int
    report_time: Timestamp64

    @property
    def fpl_percent(self) -> float:
        return self.fraction_lost / 256 * 100


def build_receiver_report(
    stats: ReceptionStats, now: Timestamp64, *, ssrc: int, source_ssrc: int
) -> RtcpReceiverReport:
    """Snapshot ``stats`` into an RR and start a new reporting interval."""
    expected, received = interval_counts(stats)
    rr = RtcpReceiverReport(
        ssrc=ssrc,
        source_ssrc=source_ssrc,
        fraction_lost=fraction_lost(expected, received),
        cumulative_lost=max(-(1 << 23), min(stats.cumulative_lost, (1 << 23) - 1)),
        highest_seq=stats.highest_seq_seen & 0xFFFFFFFF,
        jitter=min(stats.jitter_ticks, 0xFFFFFFFF),
        report_time=now,
    )
    stats.packets_expected_prior = stats.expected_total
    stats.packets_received_prior = stats.packets_received_total
    return rr


def encode_rr(rr: RtcpReceiverReport) -> bytes:
    if not 0 <= rr.fraction_lost <= 255:
        raise RtcpError(f"fraction_lost out of range: {rr.fraction_lost}")
    if not -(1 << 23) <= rr.cumulative_lost < (1 << 23):
        raise RtcpError(f"cumulative_lost out of 24-bit range: {rr.cumulative_lost}")
    cum = (rr.cumulative_lost & 0xFFFFFF).to_bytes(3, "big")
    return _RR.pack(
        0x81, RTCP_RR, RR_SIZE // 4 - 1, rr.ssrc,
        rr.source_ssrc, rr.fraction_lost, cum, rr.highest_seq, rr.jitter, 0, 0,
        rr.report_time.seconds, rr.report_time.fraction,
    )


def decode_rr(b: bytes) -> RtcpReceiverReport:
    if len(b) < RR_SIZE:
        raise TruncatedPacket(f"{len(b)} B is shorter than a receiver report ({RR_SIZE} B)")
    b0, pt, length, ssrc, src, frac, cum, hseq, jitter, _lsr, _dlsr, secs, fr = _RR.unpack_from(b)
    if b0 >> 6 != 2:
        raise RtcpError(f"unsupported RTCP version {b0 >> 6}")
    if pt != RTCP_RR:
        raise BadPacketType(f"expected packet type {RTCP_RR}, got {pt}")
    if (b0 & 0x1F) != 1:
        raise RtcpError("exactly one report block expected")
    if (length + 1) * 4 > len(b):
        raise TruncatedPacket("length field overruns packet")
    cum_lost = int.from_bytes(cum, "big")
    if cum_lost & 0x800000:
        cum_lost -= 1 << 24
    return RtcpReceiverReport(
        ssrc=ssrc,
        source_ssrc=src,
        fraction_lost=frac,
        cumulative_lost=cum_lost,
        highest_seq=hseq,
        jitter=jitter,
        report_time=Timestamp64(secs, fr),
    )
