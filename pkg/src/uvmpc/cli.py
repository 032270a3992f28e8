"""``uvmpc`` command line.

Exit status: 0 success, 1 failed check (rejected audit), 2 usage or
parameter error, 3 protocol abort.  Errors are reported on stderr as one
JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Any, Sequence

from .client import BlindMode, make_submissions
from .field import FieldParams, ParameterError, gen_field, is_probable_prime
from .harness import BenchSpec, records_to_csv, run_bitconv_bench, run_verify_bench
from .pipeline import RunConfig, run_sim, run_tcp, verifier_main
from .shamir import ALLOWED_REVEALS
from .transport import (
    FrameError,
    MsgType,
    TcpEndpoint,
    TransportError,
    client_roundtrip,
    encode_frame,
    iter_frames,
    parse_roster,
)

EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_ABORT = 3

CONFIG_KEYS = {"parties", "field_bits", "mode", "t", "thresh", "timeout_ms"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        _report("usage", message)
        sys.exit(EXIT_USAGE)


def _report(kind: str, message: str, **extra: Any) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _field_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--field-bits", type=int, dest="field_bits")
    p.add_argument("--field-seed", default="0", help="seed for the public prime (default 0)")
    p.add_argument("--prime", help="explicit modulus, decimal or 0x-hex")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON config; explicit flags take precedence")
    p.add_argument("--timeout-ms", type=int, dest="timeout_ms")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uvmpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prime-gen", help="print a random prime with its two top bits set")
    p.add_argument("--bits", type=int, required=True)
    p.add_argument("--seed")
    _common(p)

    client = sub.add_parser("client", help="client operations")
    csub = client.add_subparsers(dest="client_command", required=True, parser_class=_Parser)
    p = csub.add_parser("submit", help="submit a vector to a verifier roster")
    p.add_argument("--parties", help="host:port,host:port,...")
    _field_args(p)
    p.add_argument("--mode", choices=[m.name.lower() for m in BlindMode])
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--vector", help="comma-separated entries, e.g. 0,1,0")
    g.add_argument("--index", type=int, help="0-based position of the 1 in a unit vector")
    p.add_argument("--n", type=int, help="vector length when using --index")
    p.add_argument("--seed", help="client RNG seed (testing only)")
    _common(p)

    p = sub.add_parser("verifier", help="run one verifier of a TCP roster")
    p.add_argument("--id", type=int, required=True, dest="party_id")
    p.add_argument("--parties", help="host:port,host:port,...")
    _field_args(p)
    p.add_argument("--listen", help="bind address host:port (default: own roster entry)")
    p.add_argument("--users", type=int, required=True, help="submissions to collect")
    p.add_argument("--aggregate", action="store_true", help="aggregate accepted inputs")
    p.add_argument("--thresh", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--seed", help="verifier RNG seed (testing only)")
    _common(p)

    p = sub.add_parser("aggregate", help="validate and aggregate a batch of vectors locally")
    p.add_argument("--input", type=Path, help="JSON list of vectors")
    p.add_argument("--random-users", type=int, help="generate this many random unit vectors")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--parties", help="verifier count")
    _field_args(p)
    p.add_argument("--mode", choices=[m.name.lower() for m in BlindMode])
    p.add_argument("--thresh", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--seed")
    p.add_argument("--tcp", action="store_true", help="use a localhost TCP roster")
    p.add_argument("--transcript", type=Path, help="write all frames to this file")
    _common(p)

    bench = sub.add_parser("bench", help="parameter sweeps, CSV output")
    bsub = bench.add_subparsers(dest="bench_command", required=True, parser_class=_Parser)
    p = bsub.add_parser("verify")
    p.add_argument("--sweep", required=True, choices=["field_bits", "mode", "queries", "vector_len", "parties"])
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--parties", type=int)
    p.add_argument("--field-bits", type=int, dest="field_bits")
    p.add_argument("--n", type=int, dest="vector_len")
    p.add_argument("--queries", type=int)
    p.add_argument("--mode")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    _common(p)
    p = bsub.add_parser("bitconv")
    p.add_argument("--widths", default="8,32,64")
    p.add_argument("--parties", type=int)
    p.add_argument("--t", type=int)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    _common(p)

    audit = sub.add_parser("audit", help="inspect saved artifacts")
    asub = audit.add_subparsers(dest="audit_command", required=True, parser_class=_Parser)
    p = asub.add_parser("transcript", help="check that only permitted values were opened")
    p.add_argument("path", type=Path)
    _common(p)
    return parser


def _merge_config(args: argparse.Namespace) -> None:
    path = getattr(args, "config", None)
    if path is None:
        return
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    unknown = set(cfg) - CONFIG_KEYS
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")
    for key, value in cfg.items():
        if key == "parties" and isinstance(value, list):
            value = ",".join(value)
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, value)


def _field(args: argparse.Namespace) -> FieldParams:
    if getattr(args, "prime", None):
        p = int(args.prime, 0)
        if not is_probable_prime(p):
            raise ParameterError(f"{args.prime} is not prime")
        return FieldParams(p)
    if args.field_bits is None:
        raise UsageError("--field-bits (or --prime) is required")
    return gen_field(int(args.field_bits), seed=args.field_seed)


def _timeout(args: argparse.Namespace) -> float:
    return (args.timeout_ms or 30_000) / 1000


def _roster(args: argparse.Namespace):
    if not args.parties:
        raise UsageError("--parties is required")
    return parse_roster(str(args.parties))


def cmd_prime_gen(args: argparse.Namespace) -> int:
    f = gen_field(args.bits, seed=args.seed)
    print(hex(f.p))
    return 0


def cmd_client_submit(args: argparse.Namespace) -> int:
    roster = _roster(args)
    f = _field(args)
    if args.vector is not None:
        v = [int(x) % f.p for x in _csv_list(args.vector)]
    else:
        if args.n is None:
            raise UsageError("--index needs --n")
        if not 0 <= args.index < args.n:
            raise UsageError(f"--index must be in [0, {args.n})")
        v = [int(j == args.index) for j in range(args.n)]
    rng = random.Random(args.seed) if args.seed is not None else random.SystemRandom()
    mode = BlindMode.parse(args.mode or "square")
    subs = make_submissions(v, mode, len(roster), f, rng)
    qid = bytes(rng.randrange(256) for _ in range(16))
    replies = client_roundtrip(
        roster, qid, {i + 1: s.encode(f) for i, s in enumerate(subs)}, _timeout(args)
    )
    votes = {idx: fr.payload[0] == 1 for idx, fr in replies.items()}
    if any(fr.msg_type != MsgType.VERDICT for fr in replies.values()):
        raise TransportError("unexpected reply type")
    if len(set(votes.values())) != 1:
        raise TransportError(f"verifiers disagree: {votes}")
    print(json.dumps({"query_id": qid.hex(), "accepted": next(iter(votes.values()))}))
    return 0


def cmd_verifier(args: argparse.Namespace) -> int:
    roster = _roster(args)
    f = _field(args)
    listen = None
    if args.listen:
        host, _, port = args.listen.rpartition(":")
        listen = (host or "0.0.0.0", int(port))
    cfg = RunConfig(
        aggregate=args.aggregate,
        thresh=args.thresh or 0,
        t=args.t,
        workers=args.workers,
        timeout=_timeout(args),
        seed=args.seed,
    )
    ep = TcpEndpoint(args.party_id, roster, listen=listen, timeout=cfg.timeout)
    try:
        res = verifier_main(ep, f, cfg, args.users)
    finally:
        ep.close()
    print(
        json.dumps(
            {
                "party": res.party_id,
                "verdicts": {q.hex(): ok for q, ok in zip(res.query_ids, res.verdicts)},
                "released": res.released,
            }
        )
    )
    return 0


def cmd_aggregate(args: argparse.Namespace) -> int:
    if args.input is not None:
        vectors = json.loads(args.input.read_text())
    elif args.random_users:
        rng = random.Random(args.seed)
        vectors = [[int(j == k) for j in range(args.n)] for k in (rng.randrange(args.n) for _ in range(args.random_users))]
    else:
        raise UsageError("give --input or --random-users")
    p_count = _party_count(args.parties) if args.parties is not None else 3
    f = _field(args) if (args.field_bits or args.prime) else gen_field(16, seed=args.field_seed)
    cfg = RunConfig(
        mode=BlindMode.parse(args.mode or "square"),
        aggregate=True,
        thresh=args.thresh or 0,
        t=args.t,
        timeout=_timeout(args),
        seed=args.seed,
    )
    res = (run_tcp if args.tcp else run_sim)(vectors, p_count, f, cfg)
    if args.transcript is not None:
        args.transcript.write_bytes(b"".join(encode_frame(e.frame()) for e in res.transcript))
    print(
        json.dumps(
            {
                "prime": hex(f.p),
                "accepted": sum(res.verdicts),
                "rejected": len(res.verdicts) - sum(res.verdicts),
                "released": res.released,
                "reveals": res.reveal_sequence,
            }
        )
    )
    return 0


def _party_count(value: Any) -> int:
    text = str(value)
    return len(_csv_list(text)) if "," in text else int(text)


def cmd_bench_verify(args: argparse.Namespace) -> int:
    if args.parties is not None:
        args.parties = _party_count(args.parties)
    fixed = {
        k: getattr(args, k)
        for k in ("parties", "field_bits", "vector_len", "queries", "mode")
        if getattr(args, k) is not None
    }
    fixed.pop(args.sweep, None)
    values: list[Any] = []
    if args.values:
        values = [v if args.sweep == "mode" else int(v) for v in _csv_list(args.values)]
    spec = BenchSpec(args.sweep, values, fixed, args.reps, args.out, args.seed, args.workers)
    records = run_verify_bench(spec)
    if args.out is None:
        sys.stdout.write(records_to_csv(records))
    return 0


def cmd_bench_bitconv(args: argparse.Namespace) -> int:
    fixed: dict[str, Any] = {}
    if args.parties is not None:
        fixed["parties"] = _party_count(args.parties)
    if args.t is not None:
        fixed["t"] = int(args.t)
    spec = BenchSpec("bit_width", [int(w) for w in _csv_list(args.widths)], fixed, args.reps, args.out, args.seed)
    records = run_bitconv_bench(spec)
    if args.out is None:
        sys.stdout.write(records_to_csv(records))
    return 0 if all(r.status == "ok" for r in records) else EXIT_CHECK_FAILED


def cmd_audit_transcript(args: argparse.Namespace) -> int:
    data = args.path.read_bytes()
    counts: dict[str, int] = {}
    bad = []
    for i, fr in enumerate(iter_frames(data)):
        if fr.msg_type != MsgType.REVEAL_SHARE:
            continue
        code = fr.payload[0] if fr.payload else -1
        counts[f"{code:#04x}"] = counts.get(f"{code:#04x}", 0) + 1
        if code not in ALLOWED_REVEALS:
            bad.append({"frame": i, "sender": fr.sender, "purpose": code})
    print(json.dumps({"reveal_frames": counts, "violations": bad}))
    return EXIT_CHECK_FAILED if bad else 0


COMMANDS = {
    ("prime-gen",): cmd_prime_gen,
    ("client", "submit"): cmd_client_submit,
    ("verifier",): cmd_verifier,
    ("aggregate",): cmd_aggregate,
    ("bench", "verify"): cmd_bench_verify,
    ("bench", "bitconv"): cmd_bench_bitconv,
    ("audit", "transcript"): cmd_audit_transcript,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    key = tuple(
        x for x in (args.command, getattr(args, "client_command", None),
                    getattr(args, "bench_command", None), getattr(args, "audit_command", None))
        if x
    )
    try:
        _merge_config(args)
        return COMMANDS[key](args)
    except (UsageError, ParameterError) as exc:
        _report("usage", str(exc))
        return EXIT_USAGE
    except FrameError as exc:
        _report("frame", str(exc))
        return EXIT_CHECK_FAILED if key == ("audit", "transcript") else EXIT_ABORT
    except TransportError as exc:
        _report("protocol-abort", str(exc), party=getattr(exc, "party", None))
        return EXIT_ABORT
    except OSError as exc:
        _report("io", str(exc))
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
