"""Streaming-latency lab: capture timestamps over RTP, RTCP-driven rate control,
and a deterministic link simulator for bandwidth-degradation sweeps."""

from .clock import ClockPair, Timestamp64, diff_ms
from .profiles import DEFAULT_PROFILES, ProfileSet, QualityLevel, level_bitrate
from .rate_control import Thresholds, next_level
from .scenario import Scenario, load_scenario, report_diff, run

__all__ = [
    "ClockPair", "Timestamp64", "diff_ms", "DEFAULT_PROFILES", "ProfileSet", "QualityLevel",
    "level_bitrate", "Thresholds", "next_level", "Scenario", "load_scenario", "report_diff", "run",
]
__version__ = "0.1.0"
