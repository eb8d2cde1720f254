"""Synthetic encoder: timestamped frames sized to hit a target bitrate."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .clock import NS_PER_S, Timestamp64
from .profiles import DEFAULT_PROFILES, ProfileSet, QualityLevel


class SwitchPolicy(str, Enum):
    NEXT_FRAME = "next_frame"
    NEXT_KEYFRAME = "next_keyframe"


@dataclass(frozen=True)
class Frame:
    frame_id: int
    capture_ts: Timestamp64
    size: int
    keyframe: bool
    level_at_encode: QualityLevel


def frame_size(bitrate: int, framerate: float) -> int:
    return round(bitrate / (8 * framerate))


@dataclass
class MediaSource:
    """Frame generator for one camera.

    Every ``gop`` frames is a keyframe ``keyframe_factor`` times the nominal
    frame size; the remaining frames of the GOP shrink so the GOP still
    averages the target bitrate. ``keyframe_factor=1`` gives uniform sizes.
    """

    profiles: ProfileSet = DEFAULT_PROFILES
    level: QualityLevel = QualityLevel.HIGH
    gop: int = 30
    keyframe_factor: float = 1.0
    policy: SwitchPolicy = SwitchPolicy.NEXT_FRAME
    start_ns: int = 0
    pending: QualityLevel | None = None
    frames_emitted: int = 0
    bytes_emitted: int = 0
    _sizes: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.gop < 1:
            raise ValueError("gop must be at least 1")
        if self.keyframe_factor < 1:
            raise ValueError("keyframe_factor must be >= 1")
        self.policy = SwitchPolicy(self.policy)

    @property
    def framerate(self) -> float:
        return self.profiles.high.framerate

    def frame_time_ns(self, k: int) -> int:
        """True capture time of frame ``k``; exact, no accumulated drift."""
        return self.start_ns + round(k * NS_PER_S * 1000 / round(self.framerate * 1000))

    def sizes(self, level: QualityLevel) -> tuple[int, int]:
        """(keyframe size, delta-frame size) in bytes at ``level``."""
        if level not in self._sizes:
            prof = self.profiles[level]
            base = frame_size(prof.bitrate, prof.framerate)
            if self.keyframe_factor == 1 or self.gop == 1:
                self._sizes[level] = (base, base)
            else:
                key = round(base * self.keyframe_factor)
                delta = round((self.gop * base - key) / (self.gop - 1))
                if delta < 1:
                    raise ValueError("keyframe_factor too large for this GOP length")
                self._sizes[level] = (key, delta)
        return self._sizes[level]

    def set_level(self, level: QualityLevel) -> None:
        level = QualityLevel(level)
        if level == self.level:
            self.pending = None
            return
        if self.policy is SwitchPolicy.NEXT_FRAME:
            self.level = level
            self.pending = None
        else:
            self.pending = level

    def next_frame(self, now: Timestamp64) -> Frame:
        k = self.frames_emitted
        keyframe = k % self.gop == 0
        if keyframe and self.pending is not None:
            self.level, self.pending = self.pending, None
        key_size, delta_size = self.sizes(self.level)
        size = key_size if keyframe else delta_size
        self.frames_emitted += 1
        self.bytes_emitted += size
        return Frame(k, now, size, keyframe, self.level)
