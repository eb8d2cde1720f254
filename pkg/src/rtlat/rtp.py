"""RTP packets carrying a 64-bit capture timestamp.

The seconds word of the timestamp goes in the fixed-header timestamp field;
the fraction word rides in a one-byte-format header extension element::

     0                   1                   2                   3
     0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
    |V=2|P|X|  CC   |M|     PT      |       sequence number         |
    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
    |              timestamp (capture seconds block)                |
    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
    |                             SSRC                              |
    +=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+=+
    |       0xBE    |    0xDE       |           length=2            |
    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
    |  ID   | L=3   |      capture fraction block (4 bytes) ...     |
    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
    |     ...       |          padding (0)                          |
    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .clock import Timestamp64

RTP_VERSION = 2
HEADER_SIZE = 12
ONE_BYTE_PROFILE = 0xBEDE
EXT_SIZE = 12  # 4-byte extension header + 5-byte element + 3 bytes padding
DEFAULT_EXT_ID = 1
DEFAULT_PAYLOAD_TYPE = 96
MAX_RTP_SIZE = 65507

_HEADER = struct.Struct("!BBHII")
_EXT_HEADER = struct.Struct("!HH")


class RtpError(ValueError):
    pass


class TruncatedPacket(RtpError):
    pass


class BadVersion(RtpError):
    pass


class MalformedExtension(RtpError):
    pass


class ElementIdOutOfRange(RtpError):
    pass


class PayloadTooLarge(RtpError):
    pass


class MtuTooSmall(RtpError):
    pass


@dataclass
class RtpPacket:
    seq: int
    ts_block1: int
    ssrc: int
    ext_ts_block2: int | None = None
    payload: bytes = b""
    marker: bool = False
    payload_type: int = DEFAULT_PAYLOAD_TYPE
    padding: bool = False
    version: int = RTP_VERSION

    @property
    def ext_present(self) -> bool:
        return self.ext_ts_block2 is not None

    @property
    def overhead(self) -> int:
        return HEADER_SIZE + (EXT_SIZE if self.ext_present else 0)

    @property
    def capture_ts(self) -> Timestamp64 | None:
        if self.ext_ts_block2 is None:
            return None
        return join_timestamp(self.ts_block1, self.ext_ts_block2)


def split_timestamp(t: Timestamp64) -> tuple[int, int]:
    return t.seconds, t.fraction


def join_timestamp(block1: int, block2: int) -> Timestamp64:
    return Timestamp64(block1, block2)


def encode_packet(p: RtpPacket, *, ext_id: int = DEFAULT_EXT_ID, mtu: int = MAX_RTP_SIZE) -> bytes:
    """Serialize ``p``; ``mtu`` bounds the whole RTP packet (header included)."""
    if p.version != RTP_VERSION:
        raise BadVersion(f"version must be 2, got {p.version}")
    if p.padding:
        raise RtpError("RTP padding is not supported")
    if not 0 <= p.payload_type <= 0x7F:
        raise RtpError(f"payload type out of range: {p.payload_type}")
    if p.ext_present and not 1 <= ext_id <= 14:
        raise ElementIdOutOfRange(f"one-byte extension element id must be in [1, 14], got {ext_id}")
    if len(p.payload) > mtu - p.overhead:
        raise PayloadTooLarge(f"payload {len(p.payload)} B exceeds {mtu - p.overhead} B")

    b0 = (RTP_VERSION << 6) | (0x10 if p.ext_present else 0)
    b1 = (0x80 if p.marker else 0) | p.payload_type
    out = bytearray(_HEADER.pack(b0, b1, p.seq & 0xFFFF, p.ts_block1, p.ssrc))
    if p.ext_present:
        out += _EXT_HEADER.pack(ONE_BYTE_PROFILE, 2)
        out.append((ext_id << 4) | 3)
        out += struct.pack("!I", p.ext_ts_block2)
        out += b"\x00\x00\x00"
    out += p.payload
    return bytes(out)


def _parse_one_byte_elements(data: bytes, ext_id: int) -> int | None:
    found = None
    i = 0
    while i < len(data):
        b = data[i]
        if b == 0:  # padding byte between elements
            i += 1
            continue
        elem_id, length = b >> 4, (b & 0x0F) + 1
        if elem_id == 15:
            break
        if i + 1 + length > len(data):
            raise MalformedExtension("extension element overruns the extension block")
        if elem_id == ext_id:
            if length != 4:
                raise MalformedExtension(f"timestamp element must carry 4 bytes, got {length}")
            (found,) = struct.unpack_from("!I", data, i + 1)
        i += 1 + length
    return found


def decode_packet(b: bytes, *, ext_id: int = DEFAULT_EXT_ID) -> RtpPacket:
    if len(b) < HEADER_SIZE:
        raise TruncatedPacket(f"{len(b)} B is shorter than the fixed RTP header")
    b0, b1, seq, ts, ssrc = _HEADER.unpack_from(b)
    version = b0 >> 6
    if version != RTP_VERSION:
        raise BadVersion(f"unsupported RTP version {version}")
    has_padding = bool(b0 & 0x20)
    has_ext = bool(b0 & 0x10)
    offset = HEADER_SIZE + 4 * (b0 & 0x0F)
    end = len(b)
    if has_padding:
        if end <= offset or b[-1] == 0 or b[-1] > end - offset:
            raise TruncatedPacket("invalid padding count")
        end -= b[-1]
    if offset > end:
        raise TruncatedPacket("CSRC list overruns packet")

    block2 = None
    if has_ext:
        if offset + 4 > end:
            raise TruncatedPacket("extension header overruns packet")
        profile, words = _EXT_HEADER.unpack_from(b, offset)
        body_start = offset + 4
        offset = body_start + 4 * words
        if offset > end:
            raise MalformedExtension("extension length overruns packet")
        if profile == ONE_BYTE_PROFILE:
            block2 = _parse_one_byte_elements(b[body_start:offset], ext_id)
    return RtpPacket(
        seq=seq,
        ts_block1=ts,
        ssrc=ssrc,
        ext_ts_block2=block2,
        payload=bytes(b[offset:end]),
        marker=bool(b1 & 0x80),
        payload_type=b1 & 0x7F,
    )


def packetize_frame(
    frame_bytes: int,
    capture_ts: Timestamp64,
    mtu: int,
    seq_start: int,
    ssrc: int,
    *,
    payload_type: int = DEFAULT_PAYLOAD_TYPE,
    fill: int = 0,
) -> list[RtpPacket]:
    """Split an opaque frame of ``frame_bytes`` into RTP packets of at most ``mtu`` bytes."""
    usable = mtu - HEADER_SIZE - EXT_SIZE
    if usable <= 0:
        raise MtuTooSmall(f"mtu {mtu} leaves no room for payload")
    if frame_bytes < 1:
        raise ValueError("frame must hold at least one byte")
    block1, block2 = split_timestamp(capture_ts)
    count = math.ceil(frame_bytes / usable)
    chunk = bytes([fill]) * usable
    packets = []
    for i in range(count):
        size = min(usable, frame_bytes - i * usable)
        packets.append(
            RtpPacket(
                seq=(seq_start + i) & 0xFFFF,
                ts_block1=block1,
                ssrc=ssrc,
                ext_ts_block2=block2,
                payload=chunk if size == usable else chunk[:size],
                marker=i == count - 1,
                payload_type=payload_type,
            )
        )
    return packets


@dataclass
class FrameAssembly:
    frame_id: int
    capture_ts: Timestamp64
    first_seq: int
    expected_packets: int | None = None
    received_packets: int = 0
    complete: bool = False
    bytes: int = 0
    last_arrival_ns: int = 0
    seqs: set[int] = field(default_factory=set, repr=False)
    marker_seq: int | None = None


def _seq_delta(a: int, b: int) -> int:
    """Signed distance b - a on the 16-bit sequence circle."""
    d = (b - a) & 0xFFFF
    return d - 0x10000 if d >= 0x8000 else d


class Reassembler:
    """Groups packets of one SSRC into frames keyed by capture timestamp.

    A frame is emitted when its marker packet arrives or when a packet of a
    later frame shows up, whichever happens first. Packets lost ahead of the very first frame of a
    stream cannot be detected, since nothing precedes them.
    """

    def __init__(self) -> None:
        self._current: FrameAssembly | None = None
        self._next_frame_id = 0
        self._last_emitted_ts: Timestamp64 | None = None
        self._last_emitted_end: int | None = None
        self.duplicates = 0
        self.stale = 0

    def push(self, packet: RtpPacket, arrival_ns: int) -> list[FrameAssembly]:
        ts = packet.capture_ts
        if ts is None:
            return []
        if self._last_emitted_ts is not None and ts <= self._last_emitted_ts:
            self.stale += 1
            return []
        out: list[FrameAssembly] = []
        cur = self._current
        if cur is not None and ts != cur.capture_ts:
            if ts < cur.capture_ts:
                self.stale += 1
                return []
            out.append(self._finish(cur))
            cur = None
        if cur is None:
            cur = FrameAssembly(frame_id=self._next_frame_id, capture_ts=ts, first_seq=packet.seq)
            self._next_frame_id += 1
            self._current = cur
        if packet.seq in cur.seqs:
            self.duplicates += 1
            return out
        cur.seqs.add(packet.seq)
        cur.received_packets += 1
        cur.bytes += len(packet.payload)
        cur.last_arrival_ns = max(cur.last_arrival_ns, arrival_ns)
        if _seq_delta(cur.first_seq, packet.seq) < 0:
            cur.first_seq = packet.seq
        if packet.marker:
            cur.marker_seq = packet.seq
        if cur.marker_seq is not None:
            start = cur.first_seq
            if self._last_emitted_end is not None:
                start = (self._last_emitted_end + 1) & 0xFFFF
            span = _seq_delta(start, cur.marker_seq) + 1
            if span == cur.received_packets:
                out.append(self._finish(cur))
        return out

    def flush(self) -> list[FrameAssembly]:
        if self._current is None:
            return []
        return [self._finish(self._current)]

    def _finish(self, cur: FrameAssembly) -> FrameAssembly:
        # Packets missing between the previous frame and this one's first
        # received packet are charged to this frame.
        start = cur.first_seq
        if self._last_emitted_end is not None:
            start = (self._last_emitted_end + 1) & 0xFFFF
        # Without a marker the true end is unknown; stop at the highest packet
        # received so any gap counts against the next frame, which then cannot
        # be mistaken for complete.
        if cur.marker_seq is not None:
            end = cur.marker_seq
        else:
            end = max(cur.seqs, key=lambda q: _seq_delta(cur.first_seq, q))
        cur.expected_packets = max(_seq_delta(start, end) + 1, cur.received_packets)
        self._last_emitted_end = end
        cur.complete = (
            cur.marker_seq is not None and cur.expected_packets == cur.received_packets
        )
        self._last_emitted_ts = cur.capture_ts
        self._current = None
        return cur


def reassemble(packets: Iterable[tuple[RtpPacket, int]]) -> Iterator[FrameAssembly]:
    """Feed ``(packet, arrival_ns)`` pairs through a fresh :class:`Reassembler`."""
    r = Reassembler()
    for packet, arrival_ns in packets:
        yield from r.push(packet, arrival_ns)
    yield from r.flush()
