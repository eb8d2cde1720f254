import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rtlat.clock import Timestamp64
from rtlat.media import MediaSource, SwitchPolicy, frame_size
from rtlat.profiles import QualityLevel

H, M, L = QualityLevel.HIGH, QualityLevel.MEDIUM, QualityLevel.LOW
T0 = Timestamp64(0, 0)


def test_uniform_sizes():
    assert frame_size(5_000_000, 30) == 20_833
    assert frame_size(3_500_000, 30) == 14_583
    assert frame_size(2_000_000, 30) == 8_333
    src = MediaSource()
    assert {src.next_frame(T0).size for _ in range(60)} == {20_833}


def test_gop_total_matches_uniform():
    src = MediaSource(gop=30, keyframe_factor=4)
    frames = [src.next_frame(T0) for _ in range(30)]
    assert frames[0].keyframe and frames[0].size == 4 * 20_833
    assert not any(f.keyframe for f in frames[1:])
    assert abs(sum(f.size for f in frames) - 30 * 20_833) <= 30


def test_switch_next_frame():
    src = MediaSource()
    for _ in range(7):
        src.next_frame(T0)
    src.set_level(L)
    assert src.next_frame(T0).size == 8_333


def test_switch_to_same_level_is_noop():
    src = MediaSource(policy=SwitchPolicy.NEXT_KEYFRAME)
    src.set_level(H)
    assert src.pending is None and src.level is H


def test_switch_waits_for_keyframe():
    src = MediaSource(gop=5, policy=SwitchPolicy.NEXT_KEYFRAME)
    src.next_frame(T0)
    src.set_level(L)
    sizes = [src.next_frame(T0).level_at_encode for _ in range(5)]
    assert sizes == [H, H, H, H, L]


def test_frame_times_do_not_drift():
    src = MediaSource(start_ns=1000)
    assert src.frame_time_ns(0) == 1000
    assert src.frame_time_ns(30) == 1000 + 1_000_000_000
    assert src.frame_time_ns(3000) == 1000 + 100_000_000_000


def test_bad_gop():
    with pytest.raises(ValueError):
        MediaSource(gop=0)


@given(
    st.sampled_from(list(QualityLevel)),
    st.integers(min_value=1, max_value=60),
    st.floats(min_value=1, max_value=8),
)
def test_realized_bitrate_within_one_percent(level, gop, factor):
    assume(gop == 1 or factor < gop)
    src = MediaSource(level=level, gop=gop, keyframe_factor=factor)
    n = gop * max(1, 300 // gop)
    total = sum(src.next_frame(T0).size for _ in range(n))
    realized = total * 8 * 30 / n
    target = src.profiles[level].bitrate
    assert abs(realized - target) / target <= 0.01


@given(st.lists(st.sampled_from(list(QualityLevel)), max_size=20))
def test_every_frame_sized_at_its_level(switches):
    src = MediaSource()
    for lv in switches:
        src.set_level(lv)
        f = src.next_frame(T0)
        assert f.level_at_encode == lv
        assert f.size == src.sizes(lv)[0 if f.keyframe else 1]
