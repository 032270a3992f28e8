#!/usr/bin/env python3
"""Simulated telemetry round: users pick one of N buckets, verifiers release
only the buckets with at least ``--thresh`` votes."""

import argparse
import random

from uvmpc import RunConfig, gen_field, run_sim, run_tcp, unit_vector


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=20)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--parties", type=int, default=4)
    ap.add_argument("--t", type=int, default=1)
    ap.add_argument("--bits", type=int, default=16)
    ap.add_argument("--thresh", type=int, default=3)
    ap.add_argument("--cheaters", type=int, default=2, help="users submitting a weight-2 vector")
    ap.add_argument("--mode", default="product")
    ap.add_argument("--tcp", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    f = gen_field(args.bits, seed=args.seed)
    vectors = [unit_vector(args.n, int(rng.paretovariate(1.2)) % args.n) for _ in range(args.users)]
    for i in range(args.cheaters):
        vectors[i] = [2 if j == 0 else 0 for j in range(args.n)]

    cfg = RunConfig(mode=args.mode, aggregate=True, thresh=args.thresh, t=args.t, seed=args.seed)
    res = (run_tcp if args.tcp else run_sim)(vectors, args.parties, f, cfg)

    honest = [v for v, ok in zip(vectors, res.verdicts) if ok]
    totals = [sum(col) for col in zip(*honest)]
    print(f"p = {f.p:#x}, accepted {len(honest)}/{len(vectors)}")
    print(f"{'bucket':>6} {'true':>5} {'released':>9}")
    for j, (t, r) in enumerate(zip(totals, res.released)):
        print(f"{j:>6} {t:>5} {r:>9}")
    print("reveals:", res.reveal_sequence)
    v = res.verifiers[0]
    print(f"aggregation: {v.bgw_mults} BGW mults, {v.agg_rounds} rounds, {v.agg_bytes} bytes sent per verifier")


if __name__ == "__main__":
    main()
