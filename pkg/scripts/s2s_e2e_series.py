"""Per-frame E2E and S2S series of one stream, for plotting latency over time.

Reads a frames.csv written by ``rtlat run`` and prints
``time_s,e2e_ms,s2s_ms,diff_ms`` rows, followed by a one-line summary.
"""

import argparse
import csv
import sys
from decimal import Decimal


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("frames_csv")
    ap.add_argument("--stream", default="0")
    ap.add_argument("--every", type=int, default=1, help="keep every n-th frame")
    args = ap.parse_args()
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["time_s", "e2e_ms", "s2s_ms", "diff_ms"])
    diffs = []
    with open(args.frames_csv, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["stream_id"] == args.stream]
    for i, r in enumerate(rows):
        d = Decimal(r["s2s_ms"]) - Decimal(r["e2e_ms"])
        diffs.append(d)
        if i % args.every == 0:
            out.writerow([r["time_s"], r["e2e_ms"], r["s2s_ms"], d])
    if diffs:
        print(f"# frames={len(diffs)} diff min={min(diffs)} max={max(diffs)}", file=sys.stderr)


if __name__ == "__main__":
    main()
