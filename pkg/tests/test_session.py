import pytest

from rtlat.clock import ClockPair, Timestamp64
from rtlat.netsim import EventLoop, LinkConfig
from rtlat.profiles import QualityLevel
from rtlat.rtcp import RtcpReceiverReport, encode_rr
from rtlat.rtp import encode_packet, packetize_frame
from rtlat.session import (
    DELTA_FILL,
    KEY_FILL,
    Flag,
    Receiver,
    Sender,
    SessionConfig,
    classify_freezing,
    run_simulation,
)
from rtlat.transport import SimNetwork

MS = 1_000_000
S = 1_000_000_000
H, M, L = QualityLevel.HIGH, QualityLevel.MEDIUM, QualityLevel.LOW


class Sink:
    """Transport stand-in that records what was sent."""

    def __init__(self):
        self.sent = []
        self.inbox = []

    def send(self, data):
        self.sent.append(data)

    def poll(self, now_ns):
        out, self.inbox = self.inbox, []
        return out


def make_receiver(cfg=None, clocks=ClockPair()):
    return Receiver(0, 42, Sink(), Sink(), clocks, cfg or SessionConfig())


def frame_bytes(capture_ns, seq=0, size=20_833, fill=KEY_FILL):
    pk = packetize_frame(size, Timestamp64.from_ns(capture_ns), 1472, seq, 42, fill=fill)
    return [encode_packet(p, mtu=1472) for p in pk]


def test_fifteen_packets_per_high_frame():
    assert len(frame_bytes(0)) == 15
    assert len(frame_bytes(0, size=8_333)) == 6


def test_e2e_and_s2s_example():
    r = make_receiver()
    pk = frame_bytes(10 * S)
    out = []
    for i, data in enumerate(pk):
        out += r.receiver_on_packet(data, 10 * S + 60 * MS if i == len(pk) - 1 else 10 * S + MS)
    (sample,) = out
    assert sample.e2e_ns == 60 * MS and sample.s2s_ns == 150 * MS
    assert sample.e2e_ms == 60.0 and sample.s2s_ms == 150.0
    assert sample.flag is Flag.OK


def _around(r, middle):
    """Complete frames before and after ``middle``; an incomplete frame is
    settled when the next frame starts arriving."""
    for d in frame_bytes(0):
        r.receiver_on_packet(d, 10 * MS)
    for d in middle:
        r.receiver_on_packet(d, 43 * MS)
    for d in frame_bytes(66 * MS, seq=30, fill=KEY_FILL):
        r.receiver_on_packet(d, 76 * MS)
    return [s.capture_ts.to_ns() for s in r.samples]


def test_missing_one_of_fifteen_is_pixelated():
    r = make_receiver()
    pk = frame_bytes(33 * MS, seq=15, fill=DELTA_FILL)
    assert _around(r, pk[:7] + pk[8:]) == [0, 33 * MS, 66 * MS]
    assert r.samples[1].flag is Flag.PIXELATED and not r.samples[1].complete


def test_missing_fourteen_of_fifteen_is_discarded():
    r = make_receiver()
    pk = frame_bytes(33 * MS, seq=15, fill=DELTA_FILL)
    assert _around(r, pk[-1:]) == [0, 66 * MS]
    assert r.counters.frames_discarded == 1


def test_reference_chain_blocks_delta_after_loss():
    r = make_receiver()
    f0 = frame_bytes(0)
    f1 = frame_bytes(33 * MS, seq=15, fill=DELTA_FILL)
    f2 = frame_bytes(66 * MS, seq=30, fill=DELTA_FILL)
    f3 = frame_bytes(99 * MS, seq=45, fill=KEY_FILL)
    for d in f0:
        r.receiver_on_packet(d, 10 * MS)
    r.receiver_on_packet(f1[-1], 50 * MS)  # 1 of 15, dropped
    for d in f2:
        r.receiver_on_packet(d, 80 * MS)  # complete but its reference is gone
    for d in f3:
        r.receiver_on_packet(d, 110 * MS)
    assert [s.capture_ts.to_ns() for s in r.samples] == [0, 99 * MS]


def test_freeze_gap_flag():
    r = make_receiver()
    for d in frame_bytes(0):
        r.receiver_on_packet(d, 10 * MS)
    for d in frame_bytes(2 * S, seq=15):
        r.receiver_on_packet(d, 2 * S + 10 * MS)
    assert [s.flag for s in r.samples] == [Flag.OK, Flag.FROZEN_GAP]


def test_rtcp_report_loss_demotes_next_frame():
    cfg = SessionConfig()
    rtp, rtcp = Sink(), Sink()
    sender = Sender(0, 42, rtp, rtcp, ClockPair(), cfg)
    sender.sender_tick(0)
    rr = RtcpReceiverReport(7, 42, 12, 0, 0, 0, Timestamp64(1, 0))
    rtcp.inbox.append((encode_rr(rr), S))
    (change,) = sender.on_rtcp(S)
    assert (change.from_level, change.to_level) == (H, M)
    sender.sender_tick(S)
    assert sender.frames[Timestamp64.from_ns(S).as_u64].level is M
    assert len(rtp.sent) == 15 + 11


def test_static_mode_ignores_reports():
    cfg = SessionConfig(adaptive=False)
    rtcp = Sink()
    sender = Sender(0, 42, Sink(), rtcp, ClockPair(), cfg)
    for t in range(1, 6):
        rtcp.inbox.append((encode_rr(RtcpReceiverReport(7, 42, 200, 0, 0, 5000, Timestamp64(t, 0))), t * S))
        assert sender.on_rtcp(t * S) == []
    assert sender.source.level is H
    assert len(sender.rr_arrivals) == 5


def test_classify_freezing():
    frames = list(range(0, 10 * S, 33 * MS))
    assert classify_freezing(frames, (0, 10 * S)) == ([], 0.0)
    gaps = [t for t in frames if (t // S) % 3 != 1]  # 1 s holes every 3 s
    intervals, _ = classify_freezing(gaps, (0, 10 * S))
    assert len(intervals) == 3
    # 0..1 s is not over the threshold, 1..10 s is
    iv, frac = classify_freezing([1 * S], (0, 10 * S))
    assert iv[0].start_ns == 1 * S and frac == pytest.approx(0.9)
    with pytest.raises(ValueError):
        classify_freezing([5, 3], (0, 10))


def test_bandwidth_zero_freezes_after_drain():
    link = LinkConfig(bandwidth=12e6, queue_capacity=250_000)
    res = run_simulation(SessionConfig(adaptive=False), link, [(0, 12e6), (5 * S, 0)], 10 * S, streams=1)
    st = res.streams[0]
    assert st.samples[-1].time_ns < 5 * S + 50 * MS
    last = st.freeze_intervals[-1]
    assert last.end_ns == 10 * S
    # the freeze runs from the last frame that got out before the outage
    assert last.start_ns == st.samples[-1].time_ns
    assert 5 * S - 34 * MS <= last.start_ns <= 5 * S + 50 * MS


def _sim(clocks=ClockPair(), **cfg):
    return run_simulation(
        SessionConfig(**cfg), LinkConfig(queue_capacity=1_350_000),
        [(0, 12e6), (3 * S, 8e6)], 6 * S, clocks=clocks,
    )


def test_zero_offset_e2e_equals_path_time():
    res = _sim()
    samples = [s for st in res.streams for s in st.samples]
    assert samples
    assert all(s.e2e_ns == s.path_ns for s in samples)


def test_glass_overhead_is_constant():
    for st in _sim().streams:
        assert {s.s2s_ns - s.e2e_ns for s in st.samples} == {90 * MS}


def test_receiver_offset_shifts_e2e():
    base = _sim()
    moved = _sim(clocks=ClockPair.from_ms(receiver_ms=50))
    for a, b in zip(base.streams, moved.streams):
        assert len(a.samples) == len(b.samples)
        assert all(y.e2e_ns - x.e2e_ns == 50 * MS for x, y in zip(a.samples, b.samples))


def test_under_capacity_near_analytic_latency():
    res = run_simulation(SessionConfig(adaptive=False), LinkConfig(), [(0, 12e6)], 5 * S)
    # 15 packets of a High frame through 12 Mbps plus 10 ms propagation
    analytic = (20_833 + 15 * (24 + 28)) * 8 / 12e6 * S + 10 * MS
    for st in res.streams:
        mean = sum(s.e2e_ns for s in st.samples) / len(st.samples)
        assert analytic <= mean <= 2 * analytic


def test_adaptive_not_worse_than_static():
    steps = [(0, 12e6), (5 * S, 6e6), (10 * S, 4e6)]
    link = LinkConfig(queue_capacity=1_350_000)
    static = run_simulation(SessionConfig(adaptive=False), link, steps, 15 * S)
    adaptive = run_simulation(SessionConfig(), link, steps, 15 * S)
    for a, s in zip(adaptive.streams, static.streams):
        for lo in (0, 5 * S, 10 * S):
            count = lambda st: sum(lo <= x.time_ns < lo + 5 * S for x in st.samples)
            assert count(a) >= count(s)


def test_run_simulation_is_deterministic():
    a, b = _sim(), _sim()
    for x, y in zip(a.streams, b.streams):
        assert [(s.time_ns, s.e2e_ns) for s in x.samples] == [(s.time_ns, s.e2e_ns) for s in y.samples]
