"""``rtlat`` command line: run, validate, report-diff, presets."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .netsim import ATTENUATION_PRESET
from .profiles import DEFAULT_PROFILES, QualityLevel
from .rate_control import Thresholds
from .scenario import (
    ConfigError,
    MalformedCsv,
    format_table,
    load_scenario,
    report_diff,
    run,
    set_mode,
    set_seed,
    validate_file,
)

log = logging.getLogger("rtlat")


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scn = load_scenario(args.scenario)
    except ConfigError as exc:
        for d in exc.diagnostics:
            print(f"{args.scenario}: {d}", file=sys.stderr)
        return 2
    if args.seed is not None:
        scn = set_seed(scn, args.seed)
    if args.mode is not None:
        scn = set_mode(scn, args.mode)
    if args.transport is not None:
        scn = scn.with_overrides(transport=args.transport)
    out = args.out or os.environ.get("RTLAT_OUT") or scn.out_dir or "out"
    if scn.transport == "udp":
        log.warning("udp transport: loopback has no shaping, the bandwidth schedule is not applied")
    result = run(scn, out)
    print(format_table(result.summary, scn.streams))
    for name, path in result.paths.items():
        print(f"wrote {path}")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    diags = validate_file(args.scenario)
    if diags:
        for d in diags:
            print(f"{args.scenario}: {d}")
        return 1
    print(f"{args.scenario}: ok")
    return 0


def _cmd_report_diff(args: argparse.Namespace) -> int:
    try:
        rep = report_diff(args.csv)
    except (MalformedCsv, OSError) as exc:
        print(f"{args.csv}: {exc}", file=sys.stderr)
        return 1
    if args.series:
        print("index,s2s_minus_e2e_ms")
        for i, d in enumerate(rep.differences_ms):
            print(f"{i},{d}")
    if rep.mean_ms is None:
        print("no samples")
    else:
        lo, hi = min(rep.differences_ms), max(rep.differences_ms)
        print(f"samples={rep.count} mean_ms={rep.mean_ms:.6f} min_ms={lo} max_ms={hi}")
    return 0


def _cmd_presets(args: argparse.Namespace) -> int:
    print("Video profiles")
    print(f"  {'level':<7} {'resolution':<10} {'bitrate':>10} {'fps':>5}")
    for lv in sorted(QualityLevel, reverse=True):
        p = DEFAULT_PROFILES[lv]
        print(f"  {lv.name:<7} {p.resolution:<10} {p.bitrate / 1e6:>8g}Mb {p.framerate:>5g}")
    th = Thresholds()
    print("RTCP thresholds")
    print(f"  {'boundary':<12} {'loss %':>7} {'jitter (ticks)':>15}")
    print(f"  {'High-Medium':<12} {th.fpl_hm:>7g} {th.jit_hm:>15g}")
    print(f"  {'Medium-Low':<12} {th.fpl_ml:>7g} {th.jit_ml:>15g}")
    print("Attenuation preset")
    for db, bw in ATTENUATION_PRESET.items():
        cell = f"{bw / 1e6:g} Mbps" if bw else "connection lost"
        print(f"  {db:>4g} dB  {cell}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rtlat", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a scenario and write CSV reports")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", help="output directory (falls back to $RTLAT_OUT, then the scenario)")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=["static", "adaptive"])
    p.add_argument("--transport", choices=["sim", "udp"])
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check a scenario file without running it")
    p.add_argument("scenario")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("report-diff", help="S2S - E2E per frame and mean")
    p.add_argument("csv")
    p.add_argument("--series", action="store_true", help="print every difference")
    p.set_defaults(func=_cmd_report_diff)

    p = sub.add_parser("presets", help="print default profiles, thresholds and attenuation table")
    p.set_defaults(func=_cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
