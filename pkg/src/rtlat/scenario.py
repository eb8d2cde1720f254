"""Scenario files, the sweep runner and its CSV reports.

A scenario is a TOML file. Every key is optional; anything left out takes the
default listed in ``SCHEMA``. See README.md for the layout.
"""

from __future__ import annotations

import bisect
import csv
import io
import os
import re
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Iterable

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .clock import NS_PER_S, ClockPair
from .media import SwitchPolicy
from .netsim import ATTENUATION_PRESET, LinkConfig, attenuation_to_bandwidth
from .profiles import Profile, ProfileSet, QualityLevel
from .rate_control import Thresholds
from .session import (
    LatencySample,
    SessionConfig,
    SimResult,
    StreamReport,
    classify_freezing,
    run_datagram_session,
    run_simulation,
)

FRAME_COLUMNS = [
    "time_s", "stream_id", "frame_id", "e2e_ms", "s2s_ms",
    "level", "flag", "link_bw_bps", "queue_bytes",
]
SUMMARY_COLUMNS = [
    "step", "step_value", "step_unit", "link_bw_bps", "stream_id",
    "mean_s2s_ms", "mean_e2e_ms", "occ_high", "occ_medium", "occ_low", "label",
    "frames_displayed", "frames_pixelated", "frozen_fraction",
    "packets_delivered", "queue_idle_fraction", "queue_mean_bytes",
]
DECISION_COLUMNS = ["time_s", "stream_id", "fpl_pct", "jitter_ticks", "from_level", "to_level", "changed"]


class ConfigError(ValueError):
    def __init__(self, diagnostics: list[str]):
        self.diagnostics = diagnostics
        super().__init__("invalid scenario:\n  " + "\n  ".join(diagnostics))


class MalformedCsv(ValueError):
    pass


def _num(lo: float | None = None, hi: float | None = None, *, lo_open: bool = False, integer: bool = False):
    def check(v: Any) -> str | None:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            return f"expected a number, got {type(v).__name__}"
        if integer and not isinstance(v, int):
            return "expected an integer"
        if lo is not None and (v <= lo if lo_open else v < lo):
            return f"must be {'>' if lo_open else '>='} {lo}, got {v}"
        if hi is not None and v > hi:
            return f"must be <= {hi}, got {v}"
        return None
    return check


def _choice(*options: str):
    def check(v: Any) -> str | None:
        if v not in options:
            return f"must be one of {', '.join(options)}; got {v!r}"
        return None
    return check


def _bool(v: Any) -> str | None:
    return None if isinstance(v, bool) else f"expected true/false, got {type(v).__name__}"


def _str(v: Any) -> str | None:
    return None if isinstance(v, str) else f"expected a string, got {type(v).__name__}"


def _steps(v: Any) -> str | None:
    if not isinstance(v, list) or not v:
        return "expected a non-empty list of numbers"
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            return f"non-numeric step {x!r}"
        if x < 0:
            return f"step values must be >= 0, got {x}"
    return None


def _table(v: Any) -> str | None:
    if not isinstance(v, dict) or len(v) < 2:
        return "expected a table of at least two dB = Mbps entries"
    for k, x in v.items():
        try:
            if float(k) < 0:
                return f"attenuation {k} dB must be >= 0"
        except ValueError:
            return f"attenuation key {k!r} is not a number"
        if isinstance(x, bool) or not isinstance(x, (int, float)) or x < 0:
            return f"bandwidth for {k} dB must be a number >= 0"
    return None


_PROFILE = {
    "bitrate_bps": (_num(0, lo_open=True), None),
    "framerate": (_num(0, lo_open=True), 30.0),
    "resolution": (_str, "1920x1080"),
}

# key -> (validator, default) or nested table
SCHEMA: dict[str, Any] = {
    "name": (_str, "scenario"),
    "mode": (_choice("static", "adaptive"), "adaptive"),
    "streams": (_num(1, 2, integer=True), 2),
    "seed": (_num(0, 2**64 - 1, integer=True), 1),
    "transport": (_choice("sim", "udp"), "sim"),
    "duration_per_step_s": (_num(0, lo_open=True), 20.0),
    "warmup_s": (_num(0), 2.0),
    "rtcp_interval_ms": (_num(0, lo_open=True), 1000.0),
    "schedule": {
        "kind": (_choice("bandwidth", "attenuation"), "bandwidth"),
        "steps": (_steps, [12]),
        "attenuation_table": (_table, None),
    },
    "link": {
        "propagation_delay_ms": (_num(0), 10.0),
        "queue_capacity_bytes": (_num(0, lo_open=True, integer=True), 250_000),
        "loss_prob": (_num(0, 1), 0.0),
        "delay_jitter_ms": (_num(0), 0.0),
        "overhead_bytes": (_num(0, integer=True), 28),
    },
    "feedback_link": {
        "mirror_schedule": (_bool, True),
        "bandwidth_mbps": (_num(0), None),
        "propagation_delay_ms": (_num(0), None),
        "queue_capacity_bytes": (_num(0, lo_open=True, integer=True), None),
        "loss_prob": (_num(0, 1), None),
        "delay_jitter_ms": (_num(0), None),
    },
    "clocks": {
        "sender_offset_ms": (_num(0), 0.0),
        "receiver_offset_ms": (_num(0), 0.0),
    },
    "profiles": {
        "high": dict(_PROFILE, bitrate_bps=(_num(0, lo_open=True), 5_000_000)),
        "medium": dict(_PROFILE, bitrate_bps=(_num(0, lo_open=True), 3_500_000)),
        "low": dict(_PROFILE, bitrate_bps=(_num(0, lo_open=True), 2_000_000)),
    },
    "thresholds": {
        "fpl_hm": (_num(0), 2.0),
        "jit_hm": (_num(0), 500.0),
        "fpl_ml": (_num(0), 2.0),
        "jit_ml": (_num(0), 1000.0),
    },
    "controller": {
        "initial_level": (_choice("high", "medium", "low"), "high"),
        "min_dwell_ms": (_num(0), 0.0),
    },
    "encoder": {
        "gop": (_num(1, integer=True), 30),
        "keyframe_factor": (_num(1), 1.0),
        "switch_policy": (_choice("next_frame", "next_keyframe"), "next_frame"),
        "stream_phase": (_choice("staggered", "aligned"), "staggered"),
    },
    "packetization": {
        "mtu": (_num(100, 65535, integer=True), 1500),
        "ext_id": (_num(1, 14, integer=True), 1),
        "payload_type": (_num(0, 127, integer=True), 96),
    },
    "receiver": {
        "clock_rate": (_num(0, lo_open=True, integer=True), 90_000),
        "capture_delay_ms": (_num(0), 45.0),
        "display_delay_ms": (_num(0), 45.0),
        "decode_display_ms": (_num(0), 0.0),
        "min_render_fraction": (_num(0, 1), 0.5),
        "reference_chain": (_bool, True),
        "freeze_threshold_ms": (_num(0, lo_open=True), 1000.0),
        "freeze_label_fraction": (_num(0, 1), 0.5),
        "pixelation_label_fraction": (_num(0, 1), 0.05),
    },
    "output": {
        "dir": (_str, None),
    },
}


def _line_of(text: str, path: tuple[str, ...]) -> int | None:
    """Best-effort line number of ``path`` in the TOML source."""
    if not text:
        return None
    lines = text.splitlines()
    table = ".".join(path[:-1])
    key = path[-1]
    in_table = not table
    key_re = re.compile(rf"^\s*{re.escape(key)}\s*=")
    dotted_re = re.compile(rf"^\s*{re.escape('.'.join(path))}\s*=")
    for i, line in enumerate(lines, 1):
        stripped = line.strip()
        if stripped.startswith("["):
            header = stripped.strip("[]").strip()
            in_table = header == table
            if in_table and not key:
                return i
            continue
        if dotted_re.match(line):
            return i
        if in_table and key_re.match(line):
            return i
    return None


def _check(raw: dict, schema: dict, path: tuple[str, ...], text: str, out: list[str]) -> None:
    for key, value in raw.items():
        where = ".".join(path + (key,))
        line = _line_of(text, path + (key,))
        at = f" (line {line})" if line else ""
        if key not in schema:
            out.append(f"{where}{at}: unknown key")
            continue
        rule = schema[key]
        if isinstance(rule, dict):
            if not isinstance(value, dict):
                out.append(f"{where}{at}: expected a table")
            else:
                _check(value, rule, path + (key,), text, out)
            continue
        msg = rule[0](value)
        if msg:
            out.append(f"{where}{at}: {msg}")


def _fill(raw: dict, schema: dict) -> dict:
    merged = {}
    for key, rule in schema.items():
        if isinstance(rule, dict):
            merged[key] = _fill(raw.get(key, {}), rule)
        else:
            merged[key] = raw.get(key, rule[1])
    return merged


def _cross_check(cfg: dict, out: list[str]) -> None:
    p = cfg["profiles"]
    rates = [p[k]["bitrate_bps"] for k in ("high", "medium", "low")]
    if not rates[0] > rates[1] > rates[2]:
        out.append("profiles: bitrate_bps must strictly decrease high > medium > low")
    if len({p[k]["framerate"] for k in p}) != 1:
        out.append("profiles: all levels must share one framerate")
    t = cfg["thresholds"]
    if t["fpl_hm"] > t["fpl_ml"] or t["jit_hm"] > t["jit_ml"]:
        out.append("thresholds: high-medium values must not exceed medium-low values")
    fb = cfg["feedback_link"]
    if not fb["mirror_schedule"] and fb["bandwidth_mbps"] is None:
        out.append("feedback_link.bandwidth_mbps: required when mirror_schedule = false")
    if cfg["warmup_s"] >= cfg["duration_per_step_s"]:
        out.append("warmup_s: must be shorter than duration_per_step_s")
    if cfg["packetization"]["mtu"] - cfg["link"]["overhead_bytes"] <= 24:
        out.append("packetization.mtu: leaves no room for RTP payload")
    kf, gop = cfg["encoder"]["keyframe_factor"], cfg["encoder"]["gop"]
    if kf > 1 and gop > 1 and kf >= gop:
        out.append("encoder.keyframe_factor: must be smaller than gop")


def validate(source: str | dict, *, text: str = "") -> list[str]:
    """Diagnostics for a scenario (TOML text or parsed mapping); empty when valid."""
    if isinstance(source, str):
        text = source
        try:
            raw = tomllib.loads(source)
        except tomllib.TOMLDecodeError as exc:
            return [f"parse error: {exc}"]
    else:
        raw = source
    diags: list[str] = []
    _check(raw, SCHEMA, (), text, diags)
    if diags:
        return diags
    _cross_check(_fill(raw, SCHEMA), diags)
    return diags


def validate_file(path: str | os.PathLike) -> list[str]:
    return validate(Path(path).read_text())


@dataclass
class Scenario:
    name: str = "scenario"
    mode: str = "adaptive"
    streams: int = 2
    seed: int = 1
    transport: str = "sim"
    duration_per_step_s: float = 20.0
    warmup_s: float = 2.0
    schedule_kind: str = "bandwidth"
    steps: list[float] = field(default_factory=lambda: [12.0])
    attenuation_table: dict[float, float] = field(default_factory=lambda: dict(ATTENUATION_PRESET))
    link: LinkConfig = field(default_factory=LinkConfig)
    feedback_link: LinkConfig | None = None
    mirror_schedule: bool = True
    clocks: ClockPair = field(default_factory=ClockPair)
    session: SessionConfig = field(default_factory=SessionConfig)
    stream_phase: str = "staggered"
    freeze_label_fraction: float = 0.5
    pixelation_label_fraction: float = 0.05
    out_dir: str | None = None

    @property
    def step_ns(self) -> int:
        return round(self.duration_per_step_s * NS_PER_S)

    @property
    def warmup_ns(self) -> int:
        return round(self.warmup_s * NS_PER_S)

    @property
    def duration_ns(self) -> int:
        return self.step_ns * len(self.steps)

    @property
    def step_unit(self) -> str:
        return "Mbps" if self.schedule_kind == "bandwidth" else "dB"

    def step_bandwidth(self, value: float) -> float:
        if self.schedule_kind == "bandwidth":
            return value * 1e6
        return attenuation_to_bandwidth(value, self.attenuation_table)

    def bandwidth_steps(self) -> list[tuple[int, float]]:
        return [(i * self.step_ns, self.step_bandwidth(v)) for i, v in enumerate(self.steps)]

    def with_overrides(self, **kw: Any) -> Scenario:
        return replace(self, **kw)


def scenario_from_dict(raw: dict, *, text: str = "") -> Scenario:
    diags = validate(raw, text=text)
    if diags:
        raise ConfigError(diags)
    c = _fill(raw, SCHEMA)
    sched = c["schedule"]
    table = dict(ATTENUATION_PRESET)
    if sched["attenuation_table"] is not None:
        table = {float(k): float(v) * 1e6 for k, v in sched["attenuation_table"].items()}
    ln = c["link"]
    steps = [float(x) for x in sched["steps"]]
    seed = int(c["seed"])
    link = LinkConfig(
        bandwidth=0.0,
        propagation_delay_ms=ln["propagation_delay_ms"],
        queue_capacity=ln["queue_capacity_bytes"],
        loss_prob=ln["loss_prob"],
        delay_jitter_ms=ln["delay_jitter_ms"],
        seed=seed,
        overhead_bytes=ln["overhead_bytes"],
    )
    fb = c["feedback_link"]
    feedback = None
    if any(fb[k] is not None for k in fb if k != "mirror_schedule"):
        feedback = LinkConfig(
            bandwidth=(fb["bandwidth_mbps"] * 1e6 if fb["bandwidth_mbps"] is not None else 0.0),
            propagation_delay_ms=_pick(fb["propagation_delay_ms"], link.propagation_delay_ms),
            queue_capacity=_pick(fb["queue_capacity_bytes"], link.queue_capacity),
            loss_prob=_pick(fb["loss_prob"], link.loss_prob),
            delay_jitter_ms=_pick(fb["delay_jitter_ms"], link.delay_jitter_ms),
            seed=seed + 1,
            overhead_bytes=link.overhead_bytes,
        )
    pr = c["profiles"]
    profiles = ProfileSet(
        *(Profile(int(pr[k]["bitrate_bps"]), float(pr[k]["framerate"]), pr[k]["resolution"])
          for k in ("high", "medium", "low"))
    )
    th = c["thresholds"]
    rc = c["receiver"]
    session = SessionConfig(
        mtu=c["packetization"]["mtu"],
        ext_id=c["packetization"]["ext_id"],
        payload_type=c["packetization"]["payload_type"],
        clock_rate=rc["clock_rate"],
        rtcp_interval_ms=c["rtcp_interval_ms"],
        capture_delay_ms=rc["capture_delay_ms"],
        display_delay_ms=rc["display_delay_ms"],
        decode_display_ms=rc["decode_display_ms"],
        min_render_fraction=rc["min_render_fraction"],
        reference_chain=rc["reference_chain"],
        freeze_threshold_ms=rc["freeze_threshold_ms"],
        adaptive=c["mode"] == "adaptive",
        thresholds=Thresholds(th["fpl_hm"], th["jit_hm"], th["fpl_ml"], th["jit_ml"]),
        min_dwell_ms=c["controller"]["min_dwell_ms"],
        profiles=profiles,
        initial_level=QualityLevel.parse(c["controller"]["initial_level"]),
        gop=c["encoder"]["gop"],
        keyframe_factor=c["encoder"]["keyframe_factor"],
        switch_policy=SwitchPolicy(c["encoder"]["switch_policy"]),
    )
    return Scenario(
        name=c["name"],
        mode=c["mode"],
        streams=c["streams"],
        seed=seed,
        transport=c["transport"],
        duration_per_step_s=float(c["duration_per_step_s"]),
        warmup_s=float(c["warmup_s"]),
        schedule_kind=sched["kind"],
        steps=steps,
        attenuation_table=table,
        link=link,
        feedback_link=feedback,
        mirror_schedule=fb["mirror_schedule"] and fb["bandwidth_mbps"] is None,
        clocks=ClockPair.from_ms(c["clocks"]["sender_offset_ms"], c["clocks"]["receiver_offset_ms"]),
        session=session,
        stream_phase=c["encoder"]["stream_phase"],
        freeze_label_fraction=rc["freeze_label_fraction"],
        pixelation_label_fraction=rc["pixelation_label_fraction"],
        out_dir=c["output"]["dir"],
    )


def _pick(value: Any, default: Any) -> Any:
    return default if value is None else value


def load_scenario(path: str | os.PathLike) -> Scenario:
    text = Path(path).read_text()
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: parse error: {exc}"]) from exc
    return scenario_from_dict(raw, text=text)


def set_mode(scn: Scenario, mode: str) -> Scenario:
    return replace(scn, mode=mode, session=replace(scn.session, adaptive=mode == "adaptive"))


def set_seed(scn: Scenario, seed: int) -> Scenario:
    links = {"link": replace(scn.link, seed=seed)}
    if scn.feedback_link is not None:
        links["feedback_link"] = replace(scn.feedback_link, seed=seed + 1)
    return replace(scn, seed=seed, **links)


# --------------------------------------------------------------------------
# running and summarizing


def fmt_ns_as(ns: int, unit_ns: int, digits: int) -> str:
    """Exact decimal rendering of ``ns / unit_ns`` with ``digits`` decimals (unit_ns = 10**digits)."""
    sign = "-" if ns < 0 else ""
    whole, rem = divmod(abs(ns), unit_ns)
    return f"{sign}{whole}.{rem:0{digits}d}"


def fmt_ms(ns: int) -> str:
    return fmt_ns_as(ns, 1_000_000, 6)


def fmt_s(ns: int) -> str:
    return fmt_ns_as(ns, NS_PER_S, 9)


def _f6(x: float) -> str:
    return f"{x:.6f}"


@dataclass
class SummaryRow:
    step: int
    step_value: float
    step_unit: str
    link_bw_bps: float
    stream_id: int
    mean_s2s_ms: float | None
    mean_e2e_ms: float | None
    occupancy: dict[QualityLevel, float]
    label: str
    frames_displayed: int
    frames_pixelated: int
    frozen_fraction: float
    packets_delivered: int
    queue_idle_fraction: float
    queue_mean_bytes: float

    @property
    def dominant_level(self) -> QualityLevel:
        return max(self.occupancy, key=lambda lv: (self.occupancy[lv], lv))

    def cells(self) -> list[str]:
        def num(v: float) -> str:
            return f"{v:g}" if float(v) != int(v) else str(int(v))

        return [
            str(self.step), num(self.step_value), self.step_unit, str(round(self.link_bw_bps)),
            str(self.stream_id),
            "" if self.mean_s2s_ms is None else _f6(self.mean_s2s_ms),
            "" if self.mean_e2e_ms is None else _f6(self.mean_e2e_ms),
            _f6(self.occupancy[QualityLevel.HIGH]), _f6(self.occupancy[QualityLevel.MEDIUM]),
            _f6(self.occupancy[QualityLevel.LOW]), self.label,
            str(self.frames_displayed), str(self.frames_pixelated), _f6(self.frozen_fraction),
            str(self.packets_delivered), _f6(self.queue_idle_fraction), _f6(self.queue_mean_bytes),
        ]


def level_occupancy(
    timeline: list[tuple[int, QualityLevel]], start_ns: int, end_ns: int
) -> dict[QualityLevel, float]:
    occ = {lv: 0 for lv in QualityLevel}
    for i, (t, lv) in enumerate(timeline):
        t_next = timeline[i + 1][0] if i + 1 < len(timeline) else end_ns
        lo, hi = max(t, start_ns), min(t_next, end_ns)
        if hi > lo:
            occ[lv] += hi - lo
    span = end_ns - start_ns
    return {lv: v / span for lv, v in occ.items()}


def measurement_windows(scn: Scenario) -> list[tuple[int, int]]:
    """Per-step [start, end) in ns, skipping each step's warmup."""
    return [(i * scn.step_ns + scn.warmup_ns, (i + 1) * scn.step_ns) for i in range(len(scn.steps))]


def summarize(scn: Scenario, result: SimResult) -> list[SummaryRow]:
    rows = []
    freeze_ns = round(scn.session.freeze_threshold_ms * 1e6)
    for i, (value, (start, end)) in enumerate(zip(scn.steps, measurement_windows(scn))):
        idle = result.forward_link.idle_ns(start, end) / (end - start)
        qmean = 0.0
        if start in result.queue_area and end in result.queue_area:
            qmean = result.queue_mean_bytes(start, end)
        for st in result.streams:
            rows.append(_summary_row(scn, i, value, st, start, end, freeze_ns, idle, qmean))
    return rows


def _summary_row(
    scn: Scenario, i: int, value: float, st: StreamReport,
    start: int, end: int, freeze_ns: int, idle: float, qmean: float,
) -> SummaryRow:
    times = [s.time_ns for s in st.samples]
    lo = bisect.bisect_left(times, start)
    hi = bisect.bisect_left(times, end)
    window = st.samples[lo:hi]
    previous = st.samples[lo - 1].time_ns if lo > 0 else None
    _, frozen = classify_freezing(
        [s.time_ns for s in window], (start, end), threshold_ns=freeze_ns, previous_ns=previous
    )
    pixelated = sum(not s.complete for s in window)
    if frozen > scn.freeze_label_fraction or not window:
        label = "Freezing"
    elif pixelated / len(window) > scn.pixelation_label_fraction:
        label = "Pixelation"
    else:
        label = "numeric"
    if label == "Freezing" or not window:
        mean_s2s = mean_e2e = None
    else:
        mean_e2e = sum(s.e2e_ns for s in window) / len(window) / 1e6
        mean_s2s = sum(s.s2s_ns for s in window) / len(window) / 1e6
    delivered = bisect.bisect_left(st.arrivals, end) - bisect.bisect_left(st.arrivals, start)
    return SummaryRow(
        step=i,
        step_value=value,
        step_unit=scn.step_unit,
        link_bw_bps=scn.step_bandwidth(value),
        stream_id=st.stream_id,
        mean_s2s_ms=mean_s2s,
        mean_e2e_ms=mean_e2e,
        occupancy=level_occupancy(st.level_timeline, start, end),
        label=label,
        frames_displayed=len(window),
        frames_pixelated=pixelated,
        frozen_fraction=frozen,
        packets_delivered=delivered,
        queue_idle_fraction=idle,
        queue_mean_bytes=qmean,
    )


def frames_csv(result_streams: Iterable[StreamReport]) -> str:
    samples: list[LatencySample] = sorted(
        (s for st in result_streams for s in st.samples), key=lambda s: (s.time_ns, s.stream_id)
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FRAME_COLUMNS)
    for s in samples:
        w.writerow([
            fmt_s(s.time_ns), s.stream_id, s.frame_id, fmt_ms(s.e2e_ns), fmt_ms(s.s2s_ns),
            s.level.label if s.level is not None else "", s.flag.value,
            round(s.link_bw), s.queue_bytes,
        ])
    return buf.getvalue()


def summary_csv(rows: Iterable[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def decisions_csv(result_streams: Iterable[StreamReport]) -> str:
    entries = sorted(
        ((d, st.stream_id) for st in result_streams for d in st.decisions),
        key=lambda e: (e[0].time_ns, e[1]),
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DECISION_COLUMNS)
    for d, sid in entries:
        w.writerow([
            fmt_s(d.time_ns), sid, _f6(d.fpl), d.jitter,
            d.from_level.label, d.to_level.label, int(d.changed),
        ])
    return buf.getvalue()


@dataclass
class RunResult:
    scenario: Scenario
    sim: SimResult
    summary: list[SummaryRow]
    frames_csv: str
    summary_csv: str
    decisions_csv: str
    paths: dict[str, Path] = field(default_factory=dict)


def run(
    scn: Scenario,
    out_dir: str | os.PathLike | None = None,
) -> RunResult:
    """Execute a scenario and (when ``out_dir`` is given) write its three CSVs."""
    if scn.transport == "udp":
        reports = run_datagram_session(
            scn.session, scn.duration_ns / NS_PER_S, streams=scn.streams,
            clocks=scn.clocks, seed=scn.seed,
        )
        sim = SimResult(reports, _NoLink(), _NoLink(), scn.duration_ns, [])
    else:
        phases = [0] * scn.streams if scn.stream_phase == "aligned" else None
        sim = run_simulation(
            scn.session,
            scn.link,
            scn.bandwidth_steps(),
            scn.duration_ns,
            streams=scn.streams,
            clocks=scn.clocks,
            seed=scn.seed,
            reverse_link=scn.feedback_link,
            mirror_schedule=scn.mirror_schedule,
            stream_phase_ns=phases,
            checkpoints=[t for w in measurement_windows(scn) for t in w],
        )
    rows = summarize(scn, sim)
    result = RunResult(
        scenario=scn,
        sim=sim,
        summary=rows,
        frames_csv=frames_csv(sim.streams),
        summary_csv=summary_csv(rows),
        decisions_csv=decisions_csv(sim.streams),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in (
            ("frames.csv", result.frames_csv),
            ("summary.csv", result.summary_csv),
            ("decisions.csv", result.decisions_csv),
        ):
            path = out / name
            path.write_text(text)
            result.paths[name] = path
    return result


class _NoLink:
    """Stand-in for the simulated link in real-socket runs."""

    bandwidth = 0.0
    queued_bytes = 0

    def idle_ns(self, start: int, end: int) -> int:
        return 0


def format_table(rows: list[SummaryRow], streams: int) -> str:
    """One line per step with S2S/E2E (or the label) for each stream."""
    out = []
    head = f"{'step':>10}"
    for sid in range(streams):
        head += f" | {'S2S':>9} {'E2E':>9} {'level':>6} {'label':>10}"
    out.append(head)
    by_step: dict[int, list[SummaryRow]] = {}
    for r in rows:
        by_step.setdefault(r.step, []).append(r)
    for step, rs in sorted(by_step.items()):
        line = f"{rs[0].step_value:>6g} {rs[0].step_unit:<4}"
        for r in sorted(rs, key=lambda r: r.stream_id):
            s2s = "-" if r.mean_s2s_ms is None else f"{r.mean_s2s_ms:9.2f}"
            e2e = "-" if r.mean_e2e_ms is None else f"{r.mean_e2e_ms:9.2f}"
            line += f" | {s2s:>9} {e2e:>9} {r.dominant_level.label:>6} {r.label:>10}"
        out.append(line)
    return "\n".join(out)


# --------------------------------------------------------------------------
# S2S - E2E report


@dataclass
class DiffReport:
    differences_ms: list[Decimal]
    mean_ms: Decimal | None

    @property
    def count(self) -> int:
        return len(self.differences_ms)


def report_diff(source: str | os.PathLike | io.TextIOBase) -> DiffReport:
    """Per-frame S2S - E2E differences from a frames CSV, computed in exact decimal."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            return _report_diff(fh)
    return _report_diff(source)


def _report_diff(fh: Iterable[str]) -> DiffReport:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or not {"e2e_ms", "s2s_ms"} <= set(reader.fieldnames):
        raise MalformedCsv("missing e2e_ms/s2s_ms columns")
    diffs = []
    for lineno, row in enumerate(reader, start=2):
        try:
            diffs.append(Decimal(row["s2s_ms"]) - Decimal(row["e2e_ms"]))
        except (InvalidOperation, TypeError) as exc:
            raise MalformedCsv(f"line {lineno}: unparsable latency value") from exc
    mean = sum(diffs, Decimal(0)) / len(diffs) if diffs else None
    return DiffReport(diffs, mean)
