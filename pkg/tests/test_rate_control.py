import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import controller_cases
from rtlat.clock import Timestamp64
from rtlat.profiles import DEFAULT_PROFILES, ProfileSet, Profile
from rtlat.rate_control import (
    ControllerState,
    QualityLevel,
    Thresholds,
    level_bitrate,
    next_level,
    on_report,
)
from rtlat.rtcp import RtcpReceiverReport

H, M, L = QualityLevel.HIGH, QualityLevel.MEDIUM, QualityLevel.LOW
TH = Thresholds()


def rr(fraction_lost=0, jitter=0):
    return RtcpReceiverReport(1, 2, fraction_lost, 0, 0, jitter, Timestamp64(0, 0))


@pytest.mark.parametrize("current,fpl,jit,expected", list(controller_cases()))
def test_hand_table(current, fpl, jit, expected):
    assert next_level(QualityLevel.parse(current), fpl, jit, TH).label == expected


@pytest.mark.parametrize(
    "current,fpl,jit,expected",
    [(H, 0, 300, H), (H, 0, 700, M), (M, 2.5, 1200, L), (M, 0, 700, M), (L, 0, 900, M), (L, 3, 0, L)],
)
def test_examples(current, fpl, jit, expected):
    assert next_level(current, fpl, jit, TH) == expected


def test_level_bitrates():
    assert level_bitrate(H) == 5_000_000
    assert level_bitrate(M) == 3_500_000
    assert level_bitrate(L) == 2_000_000


def test_profiles_must_decrease():
    with pytest.raises(ValueError):
        ProfileSet(Profile(2_000_000), Profile(3_500_000), Profile(5_000_000))


def test_thresholds_validated():
    with pytest.raises(ValueError):
        Thresholds(jit_hm=2000, jit_ml=1000)


def test_steady_high_never_changes():
    state = ControllerState()
    for t in range(1, 50):
        state, change = on_report(state, rr(), TH, t)
        assert change is None
    assert state.current is H


def test_loss_report_demotes():
    state, change = on_report(ControllerState(), rr(fraction_lost=12), TH, 1)
    assert (change.from_level, change.to_level) == (H, M)


def test_two_step_promotion():
    state = ControllerState(current=L)
    state, c1 = on_report(state, rr(), TH, 1)
    state, c2 = on_report(state, rr(), TH, 2)
    assert (c1.from_level, c1.to_level) == (L, M)
    assert (c2.from_level, c2.to_level) == (M, H)


def test_reports_must_move_forward():
    state, _ = on_report(ControllerState(), rr(), TH, 5)
    with pytest.raises(ValueError):
        on_report(state, rr(), TH, 5)


def test_min_dwell_holds_changes():
    state = ControllerState(current=L)
    state, c1 = on_report(state, rr(), TH, 10, min_dwell_ns=100)
    state, c2 = on_report(state, rr(), TH, 20, min_dwell_ns=100)
    state, c3 = on_report(state, rr(), TH, 200, min_dwell_ns=100)
    assert c1 is not None and c2 is None and c3 is not None
    assert len(state.decision_log) == 3


levels = st.sampled_from(list(QualityLevel))
fpls = st.floats(min_value=0, max_value=100, allow_nan=False)
jits = st.integers(min_value=0, max_value=100_000)


@given(levels, fpls, jits)
def test_single_step(current, fpl, jit):
    assert abs(int(next_level(current, fpl, jit, TH)) - int(current)) <= 1


@given(levels, fpls, jits, fpls, jits)
def test_worse_conditions_never_raise_the_level(current, f1, j1, f2, j2):
    good, bad = (min(f1, f2), min(j1, j2)), (max(f1, f2), max(j1, j2))
    assert next_level(current, *bad, TH) <= next_level(current, *good, TH)


@given(st.lists(st.tuples(st.integers(0, 255), st.integers(0, 3000)), max_size=40))
def test_decision_log_matches_replay(reports):
    state = ControllerState()
    level = H
    for t, (frac, jit) in enumerate(reports, start=1):
        state, _ = on_report(state, rr(frac, jit), TH, t)
        level = next_level(level, frac / 256 * 100, jit, TH)
        assert state.current == level
    assert len(state.decision_log) == len(reports)
