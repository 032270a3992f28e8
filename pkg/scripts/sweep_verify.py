#!/usr/bin/env python3
"""Run every verification sweep and write one CSV per sweep.

    python scripts/sweep_verify.py --out results/ --reps 3

The field-size sweep at 2048 bits takes a while; pass ``--quick`` for a
reduced grid.
"""

import argparse
import logging
from pathlib import Path

from uvmpc.harness import BenchSpec, VERIFY_SWEEPS, run_verify_bench

QUICK = {
    "field_bits": [64, 128, 256],
    "mode": ["square", "square-naive", "product", "inverse"],
    "queries": [1, 10],
    "vector_len": [10, 100],
    "parties": [3, 5, 7, 9],
}

FULL = {
    "field_bits": [128, 256, 512, 1024, 2048],
    "mode": ["square", "square-naive", "product", "inverse"],
    "queries": [1, 10, 100],
    "vector_len": [10, 100, 1000],
    "parties": [3, 5, 7, 9],
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--reps", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--sweeps", default=",".join(VERIFY_SWEEPS))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    grid = QUICK if args.quick else FULL
    args.out.mkdir(parents=True, exist_ok=True)
    for sweep in args.sweeps.split(","):
        out = args.out / f"verify_{sweep}.csv"
        spec = BenchSpec(sweep, grid[sweep], repetitions=args.reps, out=out, seed=args.seed)
        records = run_verify_bench(spec)
        for r in records:
            logging.info(
                "%-10s %-12s client=%8.2fms server=%8.2fms mults=%6d bytes=%7d %s",
                sweep, getattr(r, sweep), r.client_ms, r.server_ms, r.field_mults, r.bytes_sent, r.status,
            )
        logging.info("wrote %s", out)


if __name__ == "__main__":
    main()
