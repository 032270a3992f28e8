#!/usr/bin/env python3
"""Threshold-gated release cost against bit width.

Prints the multiplication count per bit, which should stay roughly flat
for a ripple-carry circuit.
"""

import argparse
from pathlib import Path

from uvmpc.harness import BenchSpec, run_bitconv_bench


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--widths", default="8,16,32,64")
    ap.add_argument("--parties", type=int, default=3)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--out", type=Path, default=Path("results/bitconv.csv"))
    args = ap.parse_args()

    args.out.parent.mkdir(parents=True, exist_ok=True)
    widths = [int(w) for w in args.widths.split(",")]
    spec = BenchSpec("bit_width", widths, {"parties": args.parties}, args.reps, args.out)
    records = run_bitconv_bench(spec)
    print(f"{'width':>5} {'bgw_mults':>10} {'per bit':>8} {'rounds':>7} {'ms':>9}")
    for w in widths:
        rs = [r for r in records if r.bit_width == w]
        mults = sum(r.bgw_mults for r in rs) / len(rs)
        rounds = sum(r.rounds for r in rs) / len(rs)
        ms = sum(r.server_ms for r in rs) / len(rs)
        print(f"{w:>5} {mults:>10.1f} {mults / w:>8.2f} {rounds:>7.1f} {ms:>9.1f}")
    bad = [r for r in records if r.status != "ok"]
    if bad:
        raise SystemExit(f"{len(bad)} runs did not match the plaintext oracle")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
