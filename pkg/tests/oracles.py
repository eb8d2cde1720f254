"""Reference computations kept independent of the package internals.

Each oracle works from raw inputs (true packet indices, tick lists) rather
than from the incremental state the package keeps.
"""

from __future__ import annotations

import math
import random

# Controller decisions written out by hand, one row per loss value and one
# column per jitter value. H/M/L = High/Medium/Low.
CONTROLLER_FPL = [0.0, 1.9, 2.0, 2.1, 5.0]
CONTROLLER_JITTER = [0, 499, 500, 999, 1000, 1500]
CONTROLLER_TABLE = {
    "High": [
        "HHMMMM",
        "HHMMMM",
        "MMMMMM",
        "MMMMMM",
        "MMMMMM",
    ],
    "Medium": [
        "HHMMLL",
        "HHMMLL",
        "LLLLLL",
        "LLLLLL",
        "LLLLLL",
    ],
    "Low": [
        "MMMMLL",
        "MMMMLL",
        "LLLLLL",
        "LLLLLL",
        "LLLLLL",
    ],
}
LETTER = {"H": "High", "M": "Medium", "L": "Low"}


def controller_cases():
    """Yield (current, fpl, jitter, expected) for all 90 hand-table entries."""
    for current, rows in CONTROLLER_TABLE.items():
        for fpl, row in zip(CONTROLLER_FPL, rows):
            for jit, letter in zip(CONTROLLER_JITTER, row):
                yield current, fpl, jit, LETTER[letter]


def jitter_oracle(send_ticks: list[int], arrival_ticks: list[int]) -> int:
    """Interarrival jitter scaled by 16 after the last packet.

    j16 accumulates |D| - floor(j16 / 16) for every consecutive pair.
    """
    j16 = 0
    for i in range(1, len(send_ticks)):
        d = (arrival_ticks[i] - arrival_ticks[i - 1]) - (send_ticks[i] - send_ticks[i - 1])
        j16 = j16 + abs(d) - math.floor(j16 / 16)
    return j16


def loss_oracle(received: list[int], report_after: list[int]) -> list[int]:
    """fraction_lost of every report, by counting missing true indices.

    ``received`` is the increasing list of true packet indices that arrived;
    a report is cut after each position in ``report_after``. The expected
    range of a report runs from just past the previous report's highest index
    (or the first index) to the highest index received so far.
    """
    out = []
    lo = received[0] if received else 0
    got = set()
    for pos in report_after:
        got = set(received[: pos + 1])
        hi = max(got) if got else lo - 1
        expected = hi - lo + 1
        lost = sum(1 for i in range(lo, hi + 1) if i not in got)
        if expected <= 0 or lost <= 0:
            out.append(0)
        else:
            out.append(min(math.floor(lost * 256 / expected), 255))
        lo = hi + 1
    return out


def random_loss_pattern(rng: random.Random, n: int | None = None):
    """(start_seq, received indices, report positions, send ticks, arrival ticks)."""
    n = n or rng.randint(2, 400)
    start = rng.choice([rng.getrandbits(16), 65535 - rng.randint(0, 50)])
    p = rng.choice([0.0, 0.01, 0.1, 0.4])
    received = [i for i in range(n) if i == 0 or rng.random() >= p]
    k = rng.randint(1, 6)
    cuts = sorted(rng.sample(range(len(received)), min(k, len(received))))
    send = [i * 3000 for i in received]
    arrival = [s + 900 + rng.randint(0, rng.choice([0, 10, 3000])) for s in send]
    return start, received, cuts, send, arrival
