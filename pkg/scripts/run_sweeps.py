"""Run the shipped sweep scenarios and print a latency table for each.

    python scripts/run_sweeps.py [--out out] [static_sweep adaptive_sweep attenuation]
"""

import argparse
import time
from pathlib import Path

from rtlat.scenario import format_table, load_scenario, run, set_seed

ROOT = Path(__file__).resolve().parents[1]
DEFAULT = ["static_sweep", "adaptive_sweep", "attenuation"]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="*", default=DEFAULT)
    ap.add_argument("--out", default="out")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    for name in args.names:
        scn = load_scenario(ROOT / "scenarios" / f"{name}.toml")
        if args.seed is not None:
            scn = set_seed(scn, args.seed)
        t0 = time.perf_counter()
        result = run(scn, Path(args.out) / name)
        print(f"\n== {scn.name} ({scn.mode}, {time.perf_counter() - t0:.1f} s)")
        print(format_table(result.summary, scn.streams))


if __name__ == "__main__":
    main()
