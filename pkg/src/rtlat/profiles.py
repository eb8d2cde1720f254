"""Encoder operating points: the three quality levels and their profiles."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum


class QualityLevel(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, name: str | QualityLevel) -> QualityLevel:
        if isinstance(name, QualityLevel):
            return name
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown quality level {name!r}") from None


@dataclass(frozen=True)
class Profile:
    bitrate: int
    framerate: float = 30.0
    resolution: str = "1920x1080"


@dataclass(frozen=True)
class ProfileSet:
    high: Profile = Profile(5_000_000)
    medium: Profile = Profile(3_500_000)
    low: Profile = Profile(2_000_000)

    def __post_init__(self) -> None:
        if not self.high.bitrate > self.medium.bitrate > self.low.bitrate > 0:
            raise ValueError("profile bitrates must strictly decrease from high to low")
        for p in (self.high, self.medium, self.low):
            if p.framerate <= 0:
                raise ValueError("framerate must be positive")

    def __getitem__(self, level: QualityLevel) -> Profile:
        return {QualityLevel.HIGH: self.high, QualityLevel.MEDIUM: self.medium,
                QualityLevel.LOW: self.low}[QualityLevel(level)]


DEFAULT_PROFILES = ProfileSet()


def level_bitrate(level: QualityLevel, profiles: ProfileSet = DEFAULT_PROFILES) -> int:
    return profiles[level].bitrate
