"""Three-level bitrate controller driven by RTCP receiver reports."""

from __future__ import annotations

from dataclasses import dataclass, field

from .profiles import DEFAULT_PROFILES, ProfileSet, QualityLevel, level_bitrate
from .rtcp import RtcpReceiverReport

__all__ = [
    "BitrateChange", "ControllerState", "Decision", "QualityLevel", "Thresholds",
    "level_bitrate", "next_level", "on_report", "DEFAULT_PROFILES", "ProfileSet",
]


@dataclass(frozen=True)
class Thresholds:
    """Loss (%) and jitter (RTCP clock ticks) boundaries between levels."""

    fpl_hm: float = 2.0
    jit_hm: float = 500
    fpl_ml: float = 2.0
    jit_ml: float = 1000

    def __post_init__(self) -> None:
        if self.fpl_hm > self.fpl_ml or self.jit_hm > self.jit_ml:
            raise ValueError("high-medium thresholds must not exceed medium-low thresholds")
        if min(self.fpl_hm, self.jit_hm, self.fpl_ml, self.jit_ml) < 0:
            raise ValueError("thresholds must be non-negative")


def below(fpl: float, jitter: float, fpl_th: float, jit_th: float) -> bool:
    return fpl < fpl_th and jitter < jit_th


def above(fpl: float, jitter: float, fpl_th: float, jit_th: float) -> bool:
    return fpl >= fpl_th or jitter >= jit_th


def next_level(current: QualityLevel, fpl: float, jitter: float, th: Thresholds) -> QualityLevel:
    if current is QualityLevel.HIGH:
        if below(fpl, jitter, th.fpl_hm, th.jit_hm):
            return QualityLevel.HIGH
        return QualityLevel.MEDIUM
    if current is QualityLevel.MEDIUM:
        if below(fpl, jitter, th.fpl_hm, th.jit_hm):
            return QualityLevel.HIGH
        if above(fpl, jitter, th.fpl_ml, th.jit_ml):
            return QualityLevel.LOW
        return QualityLevel.MEDIUM
    if below(fpl, jitter, th.fpl_ml, th.jit_ml):
        return QualityLevel.MEDIUM
    return QualityLevel.LOW


@dataclass(frozen=True)
class Decision:
    time_ns: int
    fpl: float
    jitter: int
    from_level: QualityLevel
    to_level: QualityLevel

    @property
    def changed(self) -> bool:
        return self.from_level != self.to_level


@dataclass(frozen=True)
class BitrateChange:
    time_ns: int
    from_level: QualityLevel
    to_level: QualityLevel


@dataclass
class ControllerState:
    current: QualityLevel = QualityLevel.HIGH
    last_decision_ns: int | None = None
    last_change_ns: int | None = None
    decision_log: list[Decision] = field(default_factory=list)


def on_report(
    state: ControllerState,
    rr: RtcpReceiverReport,
    th: Thresholds,
    now_ns: int,
    *,
    min_dwell_ns: int = 0,
) -> tuple[ControllerState, BitrateChange | None]:
    """Run one controller step for an arriving report.

    ``now_ns`` is the sender-clock arrival time of the report; it must be
    strictly later than the previous decision. With ``min_dwell_ns`` > 0 a
    level change is held back until the current level has been in force
    that long.
    """
    if state.last_decision_ns is not None and now_ns <= state.last_decision_ns:
        raise ValueError("reports must be handled in strictly increasing time order")
    fpl = rr.fpl_percent
    target = next_level(state.current, fpl, rr.jitter, th)
    if (
        target != state.current
        and min_dwell_ns > 0
        and state.last_change_ns is not None
        and now_ns - state.last_change_ns < min_dwell_ns
    ):
        target = state.current
    state.decision_log.append(Decision(now_ns, fpl, rr.jitter, state.current, target))
    state.last_decision_ns = now_ns
    change = None
    if target != state.current:
        change = BitrateChange(now_ns, state.current, target)
        state.current = target
        state.last_change_ns = now_ns
    return state, change
