"""Sender and receiver endpoints plus the simulated and real-time drivers.

The sender stamps each frame with its capture time, packetizes it and pushes
all packets onto the transport at the capture instant; RTCP receiver reports
coming back drive the rate controller in adaptive mode. The receiver
reassembles frames, decides whether each can be shown, and records E2E and
S2S latency for every displayed frame.
"""

from __future__ import annotations

import random
import select
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

from .clock import ClockId, ClockPair, Timestamp64, to_ticks
from .media import Frame, MediaSource, SwitchPolicy
from .netsim import IP_UDP_OVERHEAD, EventLoop, LinkConfig
from .profiles import DEFAULT_PROFILES, ProfileSet, QualityLevel
from .rate_control import BitrateChange, ControllerState, Decision, Thresholds, on_report
from .rtcp import (
    DEFAULT_CLOCK_RATE,
    ReceptionStats,
    RtcpError,
    RtcpReceiverReport,
    build_receiver_report,
    decode_rr,
    encode_rr,
    update_jitter,
    update_seq,
)
from .rtp import (
    DEFAULT_EXT_ID,
    DEFAULT_PAYLOAD_TYPE,
    FrameAssembly,
    Reassembler,
    RtpError,
    decode_packet,
    encode_packet,
    packetize_frame,
)
from .transport import DatagramTransport, SimNetwork, Transport

# payload fill bytes; they mimic the NAL header of IDR and non-IDR slices so
# the receiver can tell keyframes apart without parsing a real bitstream
KEY_FILL = 0x65
DELTA_FILL = 0x41


class Flag(str, Enum):
    OK = "OK"
    PIXELATED = "Pixelated"
    FROZEN_GAP = "FrozenGap"  # first frame shown after a freeze


@dataclass
class SessionConfig:
    mtu: int = 1500  # IP MTU; RTP packets are capped at mtu - 28
    ext_id: int = DEFAULT_EXT_ID
    payload_type: int = DEFAULT_PAYLOAD_TYPE
    clock_rate: int = DEFAULT_CLOCK_RATE
    rtcp_interval_ms: float = 1000.0
    capture_delay_ms: float = 45.0
    display_delay_ms: float = 45.0
    decode_display_ms: float = 0.0
    min_render_fraction: float = 0.5
    reference_chain: bool = True
    freeze_threshold_ms: float = 1000.0
    adaptive: bool = True
    thresholds: Thresholds = field(default_factory=Thresholds)
    min_dwell_ms: float = 0.0
    profiles: ProfileSet = DEFAULT_PROFILES
    initial_level: QualityLevel = QualityLevel.HIGH
    gop: int = 30
    keyframe_factor: float = 1.0
    switch_policy: SwitchPolicy = SwitchPolicy.NEXT_FRAME

    @property
    def rtp_mtu(self) -> int:
        return self.mtu - IP_UDP_OVERHEAD

    @property
    def glass_overhead_ns(self) -> int:
        return round(self.capture_delay_ms * 1e6) + round(self.display_delay_ms * 1e6)


@dataclass
class LatencySample:
    stream_id: int
    frame_id: int
    capture_ts: Timestamp64
    display_ts: Timestamp64
    e2e_ns: int
    s2s_ns: int
    level: QualityLevel | None
    flag: Flag
    time_ns: int  # true time of display
    complete: bool = True
    path_ns: int | None = None  # true capture-to-finalize time, when known
    link_bw: float = 0.0
    queue_bytes: int = 0

    @property
    def e2e_ms(self) -> float:
        return self.e2e_ns / 1e6

    @property
    def s2s_ms(self) -> float:
        return self.s2s_ns / 1e6


@dataclass(frozen=True)
class SentFrame:
    frame_id: int
    true_ns: int
    level: QualityLevel
    keyframe: bool
    packets: int


class Sender:
    def __init__(
        self,
        stream_id: int,
        ssrc: int,
        rtp: Transport,
        rtcp: Transport,
        clocks: ClockPair,
        cfg: SessionConfig,
        *,
        seq_start: int = 0,
        start_ns: int = 0,
    ) -> None:
        self.stream_id = stream_id
        self.ssrc = ssrc
        self.rtp = rtp
        self.rtcp = rtcp
        self.clocks = clocks
        self.cfg = cfg
        self.seq = seq_start & 0xFFFF
        self.source = MediaSource(
            profiles=cfg.profiles,
            level=cfg.initial_level,
            gop=cfg.gop,
            keyframe_factor=cfg.keyframe_factor,
            policy=cfg.switch_policy,
            start_ns=start_ns,
        )
        self.controller = ControllerState(current=cfg.initial_level)
        self.level_timeline: list[tuple[int, QualityLevel]] = [(0, self.source.level)]
        self.frames: dict[int, SentFrame] = {}  # keyed by 64-bit capture timestamp
        self.packets_sent = 0
        self.rr_arrivals: list[int] = []  # sender clock ns
        self.reports: list[RtcpReceiverReport] = []

    @property
    def decisions(self) -> list[Decision]:
        return self.controller.decision_log

    def next_frame_ns(self) -> int:
        return self.source.frame_time_ns(self.source.frames_emitted)

    def sender_tick(self, now_ns: int) -> list:
        """Capture, packetize and send one frame at true time ``now_ns``."""
        capture = self.clocks.now(ClockId.SENDER, now_ns)
        frame: Frame = self.source.next_frame(capture)
        packets = packetize_frame(
            frame.size,
            capture,
            self.cfg.rtp_mtu,
            self.seq,
            self.ssrc,
            payload_type=self.cfg.payload_type,
            fill=KEY_FILL if frame.keyframe else DELTA_FILL,
        )
        self.seq = (self.seq + len(packets)) & 0xFFFF
        for p in packets:
            self.rtp.send(encode_packet(p, ext_id=self.cfg.ext_id, mtu=self.cfg.rtp_mtu))
        self.packets_sent += len(packets)
        self.frames[capture.as_u64] = SentFrame(
            frame.frame_id, now_ns, frame.level_at_encode, frame.keyframe, len(packets)
        )
        if self.level_timeline[-1][1] != frame.level_at_encode:
            self.level_timeline.append((now_ns, frame.level_at_encode))
        return packets

    def on_rtcp(self, now_ns: int) -> list[BitrateChange]:
        changes = []
        for data, arrival_ns in self.rtcp.poll(now_ns):
            try:
                rr = decode_rr(data)
            except RtcpError:
                continue
            if rr.source_ssrc != self.ssrc:
                continue
            local_ns = self.clocks.now_ns(ClockId.SENDER, arrival_ns)
            self.rr_arrivals.append(local_ns)
            self.reports.append(rr)
            if not self.cfg.adaptive:
                continue
            _, change = on_report(
                self.controller,
                rr,
                self.cfg.thresholds,
                local_ns,
                min_dwell_ns=round(self.cfg.min_dwell_ms * 1e6),
            )
            if change is not None:
                self.source.set_level(change.to_level)
                changes.append(change)
        return changes

    def lookup(self, capture: Timestamp64) -> SentFrame | None:
        return self.frames.get(capture.as_u64)


@dataclass
class ReceiverCounters:
    packets: int = 0
    bad_packets: int = 0
    frames_finalized: int = 0
    frames_complete: int = 0
    frames_pixelated: int = 0
    frames_discarded: int = 0


class Receiver:
    def __init__(
        self,
        stream_id: int,
        ssrc: int,
        rtp: Transport,
        rtcp: Transport,
        clocks: ClockPair,
        cfg: SessionConfig,
        *,
        report_ssrc: int = 0,
        lookup: Callable[[Timestamp64], SentFrame | None] | None = None,
    ) -> None:
        self.stream_id = stream_id
        self.ssrc = ssrc
        self.report_ssrc = report_ssrc
        self.rtp = rtp
        self.rtcp = rtcp
        self.clocks = clocks
        self.cfg = cfg
        self.lookup = lookup
        self.stats = ReceptionStats()
        self.reassembler = Reassembler()
        self.samples: list[LatencySample] = []
        self.counters = ReceiverCounters()
        self.reports: list[RtcpReceiverReport] = []
        self.arrivals: list[int] = []
        self._keyframes: dict[int, bool] = {}
        self._chain_ok = False
        self._last_display_ns: int | None = None
        self._freeze_ns = round(cfg.freeze_threshold_ms * 1e6)
        self._decode_ns = round(cfg.decode_display_ms * 1e6)
        self._glass_ns = cfg.glass_overhead_ns
        self.link_probe: Callable[[], tuple[float, int]] | None = None

    def on_packets(self, now_ns: int) -> list[LatencySample]:
        out = []
        for data, arrival_ns in self.rtp.poll(now_ns):
            out.extend(self.receiver_on_packet(data, arrival_ns))
        return out

    def receiver_on_packet(self, data: bytes, arrival_ns: int) -> list[LatencySample]:
        try:
            pkt = decode_packet(data, ext_id=self.cfg.ext_id)
        except RtpError:
            self.counters.bad_packets += 1
            return []
        if pkt.ssrc != self.ssrc or pkt.capture_ts is None:
            self.counters.bad_packets += 1
            return []
        self.counters.packets += 1
        self.arrivals.append(arrival_ns)
        local_ns = self.clocks.now_ns(ClockId.RECEIVER, arrival_ns)
        rate = self.cfg.clock_rate
        update_seq(self.stats, pkt.seq)
        update_jitter(self.stats, to_ticks(pkt.capture_ts.to_ns(), rate), to_ticks(local_ns, rate))
        if pkt.payload:
            self._keyframes.setdefault(pkt.capture_ts.as_u64, pkt.payload[0] == KEY_FILL)
        out = []
        for fa in self.reassembler.push(pkt, local_ns):
            sample = self._finalize(fa, local_ns, arrival_ns)
            if sample is not None:
                out.append(sample)
        return out

    def _finalize(self, fa: FrameAssembly, local_ns: int, true_ns: int) -> LatencySample | None:
        c = self.counters
        c.frames_finalized += 1
        keyframe = self._keyframes.pop(fa.capture_ts.as_u64, False)
        fraction = fa.received_packets / fa.expected_packets if fa.expected_packets else 0.0
        decodable = keyframe or self._chain_ok or not self.cfg.reference_chain
        if fa.complete and decodable:
            flag = Flag.OK
            c.frames_complete += 1
        elif decodable and fraction >= self.cfg.min_render_fraction:
            flag = Flag.PIXELATED
            c.frames_pixelated += 1
        else:
            c.frames_discarded += 1
            self._chain_ok = False
            return None
        self._chain_ok = True
        display_local = local_ns + self._decode_ns
        display_true = true_ns + self._decode_ns
        if self._last_display_ns is not None and display_true - self._last_display_ns > self._freeze_ns:
            flag = Flag.FROZEN_GAP
        self._last_display_ns = display_true
        capture_ns = fa.capture_ts.to_ns()
        e2e = display_local - capture_ns
        sent = self.lookup(fa.capture_ts) if self.lookup else None
        bw, queued = self.link_probe() if self.link_probe else (0.0, 0)
        sample = LatencySample(
            stream_id=self.stream_id,
            frame_id=sent.frame_id if sent else fa.frame_id,
            capture_ts=fa.capture_ts,
            display_ts=Timestamp64.from_ns(display_local),
            e2e_ns=e2e,
            s2s_ns=e2e + self._glass_ns,
            level=sent.level if sent else None,
            flag=flag,
            time_ns=display_true,
            complete=fa.complete,
            path_ns=true_ns - sent.true_ns if sent else None,
            link_bw=bw,
            queue_bytes=queued,
        )
        self.samples.append(sample)
        return sample

    def send_report(self, now_ns: int) -> RtcpReceiverReport | None:
        if self.stats.base_seq is None:
            return None
        rr = build_receiver_report(
            self.stats,
            self.clocks.now(ClockId.RECEIVER, now_ns),
            ssrc=self.report_ssrc,
            source_ssrc=self.ssrc,
        )
        self.rtcp.send(encode_rr(rr))
        self.reports.append(rr)
        return rr


@dataclass(frozen=True)
class FreezeInterval:
    start_ns: int
    end_ns: int

    @property
    def duration_ns(self) -> int:
        return self.end_ns - self.start_ns


def classify_freezing(
    display_ns: Sequence[int],
    window: tuple[int, int],
    *,
    threshold_ns: int = 1_000_000_000,
    previous_ns: int | None = None,
) -> tuple[list[FreezeInterval], float]:
    """Freeze intervals inside ``window`` and the frozen fraction of it.

    A freeze is any gap between consecutive displayed frames longer than
    ``threshold_ns``, including the gap from the last frame shown before the
    window (``previous_ns``) or from the window start when nothing was shown
    yet, and the open gap running to the window end.
    """
    start, end = window
    if end <= start:
        raise ValueError("empty window")
    times = [t for t in display_ns if start <= t < end]
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("display timeline must be sorted")
    anchor = previous_ns if previous_ns is not None else start
    points = [anchor, *times, end]
    intervals = []
    for a, b in zip(points, points[1:]):
        if b - a > threshold_ns:
            lo, hi = max(a, start), b
            if hi > lo:
                intervals.append(FreezeInterval(lo, hi))
    frozen = sum(iv.duration_ns for iv in intervals)
    return intervals, frozen / (end - start)


@dataclass
class StreamReport:
    stream_id: int
    ssrc: int
    samples: list[LatencySample]
    decisions: list[Decision]
    level_timeline: list[tuple[int, QualityLevel]]
    rr_arrivals: list[int]
    packets_sent: int
    frames_sent: int
    receiver: ReceiverCounters
    arrivals: list[int] = field(default_factory=list)
    freeze_intervals: list[FreezeInterval] = field(default_factory=list)


@dataclass
class SimResult:
    streams: list[StreamReport]
    forward_link: object
    reverse_link: object
    duration_ns: int
    bandwidth_trace: list[tuple[int, float]]
    queue_area: dict[int, int] = field(default_factory=dict)

    def queue_mean_bytes(self, start_ns: int, end_ns: int) -> float:
        """Time-averaged forward queue occupancy between two checkpoints."""
        return (self.queue_area[end_ns] - self.queue_area[start_ns]) / (end_ns - start_ns)


def stream_ssrc(seed: int, stream_id: int) -> tuple[int, int]:
    """Deterministic (ssrc, initial sequence number) for a stream."""
    rng = random.Random(seed * 1000 + stream_id)
    return rng.getrandbits(32), rng.getrandbits(16)


def _frame_tick(loop: EventLoop, sender: Sender, end_ns: int) -> None:
    sender.sender_tick(loop.now)
    nxt = sender.next_frame_ns()
    if nxt < end_ns:
        loop.schedule(nxt, _frame_tick, loop, sender, end_ns)


def _report_tick(loop: EventLoop, receiver: Receiver, every_ns: int, end_ns: int) -> None:
    receiver.send_report(loop.now)
    if loop.now + every_ns < end_ns:
        loop.schedule(loop.now + every_ns, _report_tick, loop, receiver, every_ns, end_ns)


def run_simulation(
    cfg: SessionConfig,
    link: LinkConfig,
    bandwidth_steps: Sequence[tuple[int, float]],
    duration_ns: int,
    *,
    streams: int = 2,
    clocks: ClockPair = ClockPair(),
    seed: int = 1,
    reverse_link: LinkConfig | None = None,
    mirror_schedule: bool = True,
    stream_phase_ns: Sequence[int] | None = None,
    trace: bool = False,
    checkpoints: Sequence[int] = (),
) -> SimResult:
    """Run ``streams`` camera streams over one shared simulated link.

    ``bandwidth_steps`` lists ``(at_ns, bit/s)`` capacity changes applied to
    the forward link (and to the feedback link when ``mirror_schedule``).
    Streams are phase-staggered evenly across one frame interval unless
    ``stream_phase_ns`` says otherwise. At each of ``checkpoints`` the forward
    queue's byte-time integral is recorded for window averages.
    """
    loop = EventLoop()
    net = SimNetwork(loop, link, reverse_link)
    if trace:
        net.forward.trace = []
        net.reverse.trace = []
    interval_ns = round(1e9 / cfg.profiles.high.framerate)
    if stream_phase_ns is None:
        stream_phase_ns = [i * interval_ns // streams for i in range(streams)]
    rtcp_ns = round(cfg.rtcp_interval_ms * 1e6)
    senders: list[Sender] = []
    receivers: list[Receiver] = []
    bw_trace: list[tuple[int, float]] = [(0, link.bandwidth)]

    def probe() -> tuple[float, int]:
        return net.forward.bandwidth, net.forward.queued_bytes

    for sid in range(streams):
        ssrc, seq0 = stream_ssrc(seed, sid)
        rtp_tx = net.endpoint(f"s{sid}-send", f"s{sid}-recv")
        rtp_rx = net.endpoint(f"s{sid}-recv", f"s{sid}-send")
        rtcp_tx = net.endpoint(f"s{sid}-rtcp-send", f"s{sid}-rtcp-recv", direction="reverse")
        rtcp_rx = net.endpoint(f"s{sid}-rtcp-recv", f"s{sid}-rtcp-send", direction="reverse")
        sender = Sender(sid, ssrc, rtp_tx, rtcp_rx, clocks, cfg, seq_start=seq0,
                        start_ns=stream_phase_ns[sid])
        receiver = Receiver(sid, ssrc, rtp_rx, rtcp_tx, clocks, cfg,
                            report_ssrc=ssrc ^ 0xFFFFFFFF, lookup=sender.lookup)
        receiver.link_probe = probe
        rtp_rx.listener = receiver.on_packets
        rtcp_rx.listener = sender.on_rtcp
        senders.append(sender)
        receivers.append(receiver)

        loop.schedule(sender.next_frame_ns(), _frame_tick, loop, sender, duration_ns)
        loop.schedule(rtcp_ns, _report_tick, loop, receiver, rtcp_ns, duration_ns)

    def set_bw(bw: float) -> None:
        net.forward.set_bandwidth(bw)
        if mirror_schedule:
            net.reverse.set_bandwidth(bw)
        bw_trace.append((loop.now, bw))

    for at_ns, bw in bandwidth_steps:
        if at_ns == 0:
            net.forward.bandwidth = float(bw)
            if mirror_schedule:
                net.reverse.bandwidth = float(bw)
            bw_trace[0] = (0, bw)
        else:
            loop.schedule(at_ns, set_bw, bw)

    areas: dict[int, int] = {}

    def snapshot(t: int) -> None:
        areas[t] = net.forward.queue_area()

    for t in sorted(set(checkpoints)):
        if t < duration_ns:
            loop.schedule(t, snapshot, t)
    loop.run_until(duration_ns)
    if duration_ns in checkpoints:
        areas[duration_ns] = net.forward.queue_area()

    reports = []
    freeze_ns = round(cfg.freeze_threshold_ms * 1e6)
    for s, r in zip(senders, receivers):
        intervals, _ = classify_freezing(
            [x.time_ns for x in r.samples], (0, duration_ns), threshold_ns=freeze_ns
        )
        reports.append(
            StreamReport(
                stream_id=s.stream_id,
                ssrc=s.ssrc,
                samples=r.samples,
                decisions=s.decisions,
                level_timeline=s.level_timeline,
                rr_arrivals=s.rr_arrivals,
                packets_sent=s.packets_sent,
                frames_sent=s.source.frames_emitted,
                receiver=r.counters,
                arrivals=r.arrivals,
                freeze_intervals=intervals,
            )
        )
    return SimResult(reports, net.forward, net.reverse, duration_ns, bw_trace, areas)


def _even_port_pair(host: str, clock_ns: Callable[[], int]) -> tuple[DatagramTransport, DatagramTransport]:
    """Bind an RTP socket on an even port and its RTCP socket on the next odd port."""
    for _ in range(64):
        probe = DatagramTransport((host, 0), clock_ns=clock_ns)
        port = probe.address[1]
        probe.close()
        port += port % 2
        try:
            rtp = DatagramTransport((host, port), clock_ns=clock_ns)
        except OSError:
            continue
        try:
            rtcp = DatagramTransport((host, port + 1), clock_ns=clock_ns)
        except OSError:
            rtp.close()
            continue
        return rtp, rtcp
    raise OSError("could not find a free even/odd UDP port pair")


def run_datagram_session(
    cfg: SessionConfig,
    duration_s: float,
    *,
    streams: int = 1,
    clocks: ClockPair = ClockPair(),
    seed: int = 1,
    host: str = "127.0.0.1",
) -> list[StreamReport]:
    """Real-time run over UDP loopback; one sequential loop drives all endpoints.

    Sender and receiver each get an even/odd RTP/RTCP port pair. Time is the
    monotonic clock measured from the start of the run.
    """
    t0 = time.monotonic_ns()

    def clock_ns() -> int:
        return time.monotonic_ns() - t0

    interval_ns = round(1e9 / cfg.profiles.high.framerate)
    duration_ns = round(duration_s * 1e9)
    rtcp_ns = round(cfg.rtcp_interval_ms * 1e6)
    endpoints = []
    sockets = []
    try:
        for sid in range(streams):
            ssrc, seq0 = stream_ssrc(seed, sid)
            s_rtp, s_rtcp = _even_port_pair(host, clock_ns)
            r_rtp, r_rtcp = _even_port_pair(host, clock_ns)
            s_rtp.remote, r_rtp.remote = r_rtp.address, s_rtp.address
            s_rtcp.remote, r_rtcp.remote = r_rtcp.address, s_rtcp.address
            sockets += [s_rtp, s_rtcp, r_rtp, r_rtcp]
            sender = Sender(sid, ssrc, s_rtp, s_rtcp, clocks, cfg, seq_start=seq0,
                            start_ns=sid * interval_ns // streams)
            receiver = Receiver(sid, ssrc, r_rtp, r_rtcp, clocks, cfg,
                                report_ssrc=ssrc ^ 0xFFFFFFFF, lookup=sender.lookup)
            endpoints.append([sender, receiver, sender.next_frame_ns(), rtcp_ns])

        readers = {}
        for sender, receiver, *_ in endpoints:
            readers[receiver.rtp.fileno()] = receiver.on_packets
            readers[sender.rtcp.fileno()] = sender.on_rtcp

        while True:
            now = clock_ns()
            if now >= duration_ns:
                break
            for ep in endpoints:
                sender, receiver, next_frame, next_rr = ep
                if now >= next_frame:
                    sender.sender_tick(now)
                    ep[2] = sender.next_frame_ns()
                if now >= next_rr:
                    receiver.send_report(now)
                    ep[3] = next_rr + rtcp_ns
            wake = min(min(ep[2], ep[3]) for ep in endpoints)
            timeout = max(0.0, (min(wake, duration_ns) - clock_ns()) / 1e9)
            ready, _, _ = select.select(list(readers), [], [], timeout)
            for fd in ready:
                readers[fd](clock_ns())
        # drain anything still in flight on loopback
        deadline = clock_ns() + 200_000_000
        while clock_ns() < deadline:
            ready, _, _ = select.select(list(readers), [], [], 0.02)
            if not ready:
                break
            for fd in ready:
                readers[fd](clock_ns())

        reports = []
        for sender, receiver, *_ in endpoints:
            reports.append(
                StreamReport(
                    stream_id=sender.stream_id,
                    ssrc=sender.ssrc,
                    samples=receiver.samples,
                    decisions=sender.decisions,
                    level_timeline=sender.level_timeline,
                    rr_arrivals=sender.rr_arrivals,
                    packets_sent=sender.packets_sent,
                    frames_sent=sender.source.frames_emitted,
                    receiver=receiver.counters,
                    arrivals=receiver.arrivals,
                )
            )
        return reports
    finally:
        for s in sockets:
            s.close()
