"""Parameter sweeps over the verification and aggregation protocols.

Each run produces one :class:`BenchRecord` per parameter point and
repetition.  Counters (field operations, BGW multiplications, rounds,
bytes) are exact; the ``*_ms`` columns are wall clock on whatever machine
runs the sweep.  Records are written as CSV.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .bitconv import AggregationConfig, threshold_release
from .client import BlindMode, unit_vector
from .field import FieldParams, ParameterError, gen_field
from .pipeline import RunConfig, derive_rng, run_sim
from .shamir import Party, additive_to_shamir
from .transport import SimNetwork, TransportError, open_session

log = logging.getLogger(__name__)

VERIFY_SWEEPS = ("field_bits", "mode", "queries", "vector_len", "parties")
SWEEPS = VERIFY_SWEEPS + ("bit_width",)

DEFAULTS: dict[str, Any] = {
    "field_bits": 256,
    "mode": "product",
    "queries": 1,
    "vector_len": 100,
    "parties": 3,
    "bit_width": 8,
    "t": None,
}

DEFAULT_VALUES: dict[str, list[Any]] = {
    "field_bits": [128, 256, 512, 1024, 2048],
    "mode": ["square", "product", "inverse"],
    "queries": [1, 10, 100],
    "vector_len": [10, 100, 1000],
    "parties": [3, 5, 7, 9],
    "bit_width": [8, 32, 64],
}


@dataclass
class BenchSpec:
    sweep: str
    values: list[Any] = field(default_factory=list)
    fixed: dict[str, Any] = field(default_factory=dict)
    repetitions: int = 1
    out: str | Path | None = None
    seed: int = 0
    workers: int = 4

    def __post_init__(self) -> None:
        if self.sweep not in SWEEPS:
            raise ParameterError(f"unknown sweep {self.sweep!r}; choose from {', '.join(SWEEPS)}")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be at least 1")
        if not self.values:
            self.values = list(DEFAULT_VALUES[self.sweep])
        unknown = set(self.fixed) - set(DEFAULTS)
        if unknown:
            raise ParameterError(f"unknown fixed parameters {sorted(unknown)}")

    def points(self) -> Iterable[dict[str, Any]]:
        for value in self.values:
            params = {**DEFAULTS, **self.fixed, self.sweep: value}
            yield params


@dataclass
class BenchRecord:
    sweep: str
    field_bits: int
    mode: str
    queries: int
    vector_len: int
    parties: int
    bit_width: int
    rep: int
    client_ms: float = 0.0
    server_ms: float = 0.0
    field_mults: int = 0
    field_exps: int = 0
    bgw_mults: int = 0
    rounds: int = 0
    bytes_sent: int = 0
    status: str = "ok"
    client_bytes: int = 0
    limb_mults: int = 0


CSV_COLUMNS = [f.name for f in dataclasses.fields(BenchRecord)]
_INT_COLUMNS = {
    f.name for f in dataclasses.fields(BenchRecord) if f.type in ("int", int)
}
_FLOAT_COLUMNS = {"client_ms", "server_ms"}


def parse_mode(name: str) -> tuple[BlindMode, bool]:
    """``"square-naive"`` selects Square with per-entry exponentiation."""
    base, _, variant = name.lower().replace("_", "-").partition("-")
    if variant not in ("", "naive"):
        raise ParameterError(f"unknown mode variant {name!r}")
    mode = BlindMode.parse(base)
    if variant and mode is not BlindMode.SQUARE:
        raise ParameterError("only square has a naive variant")
    return mode, bool(variant)


def _limbs(f: FieldParams) -> int:
    return -(-f.lam // 64)


def _record(spec: BenchSpec, params: dict[str, Any], rep: int) -> BenchRecord:
    return BenchRecord(
        sweep=spec.sweep,
        field_bits=int(params["field_bits"]),
        mode=str(params["mode"]),
        queries=int(params["queries"]),
        vector_len=int(params["vector_len"]),
        parties=int(params["parties"]),
        bit_width=int(params["bit_width"]),
        rep=rep,
    )


def run_verify_bench(spec: BenchSpec) -> list[BenchRecord]:
    """Client + verifier sessions on the simulator, one record per point and rep.

    Client counters are per query and cover building the blinding matrix:
    ``field_mults`` counts every modular multiplication, including those
    inside exponentiations and inversions, and ``field_exps`` the
    exponentiations themselves.  ``limb_mults`` scales ``field_mults`` by
    the cost of one multiplication in 64-bit limbs.  ``bytes_sent`` is what
    one verifier sends per query, ``client_bytes`` what one client uploads
    in total.
    """
    if spec.sweep not in VERIFY_SWEEPS:
        raise ParameterError(f"verify bench cannot sweep {spec.sweep!r}")
    records = []
    for params in spec.points():
        f = gen_field(int(params["field_bits"]), seed=spec.seed)
        mode, naive = parse_mode(str(params["mode"]))
        q, n, P = int(params["queries"]), int(params["vector_len"]), int(params["parties"])
        for rep in range(spec.repetitions):
            rec = _record(spec, params, rep)
            rng = random.Random(f"{spec.seed}/{rep}/{sorted(params.items())}")
            vectors = [unit_vector(n, rng.randrange(n)) for _ in range(q)]
            cfg = RunConfig(mode=mode, naive=naive, workers=spec.workers, seed=rng.getrandbits(64))
            try:
                res = run_sim(vectors, P, f, cfg)
            except (TransportError, ParameterError) as exc:
                log.warning("point %s rep %d failed: %s", params, rep, exc)
                rec.status = f"failed: {exc}"
                records.append(rec)
                continue
            if not all(res.verdicts):
                rec.status = "rejected-honest-input"
            rec.client_ms = 1000 * sum(c.seconds for c in res.clients) / q
            rec.server_ms = 1000 * max(v.verify_seconds for v in res.verifiers)
            rec.field_mults = sum(c.ops.modmuls for c in res.clients) // q
            rec.field_exps = sum(c.ops.exps for c in res.clients) // q
            rec.limb_mults = sum(c.ops.modmuls for c in res.clients) // q * _limbs(f) ** 2
            rec.rounds = res.verifiers[0].verify_rounds
            rec.bytes_sent = res.verifiers[0].verify_bytes // q
            rec.client_bytes = sum(len(b) for c in res.clients for b in c.payloads.values()) // q
            records.append(rec)
    _maybe_write(spec, records)
    return records


def run_bitconv_bench(spec: BenchSpec) -> list[BenchRecord]:
    """Threshold-gated release of one shared sum per width, checked against plaintext."""
    if spec.sweep != "bit_width":
        raise ParameterError("bitconv bench sweeps bit_width only")
    records = []
    for params in spec.points():
        width = int(params["bit_width"])
        f = gen_field(width, seed=spec.seed)
        P, t = int(params["parties"]), params["t"]
        for rep in range(spec.repetitions):
            rec = _record(spec, params, rep)
            rec.field_bits = f.lam
            rec.mode, rec.queries, rec.vector_len = "-", 1, 1
            rng = random.Random(f"{spec.seed}/{rep}/{width}")
            window = 1 << (width - 2)
            total, thresh = rng.randrange(window), rng.randrange(window)
            addends = [rng.randrange(f.p) for _ in range(P - 1)]
            addends.append((total - sum(addends)) % f.p)
            cfg = AggregationConfig(thresh, 1, f)
            net = SimNetwork(P)
            seed = rng.getrandbits(64)

            def job(ep):
                prng = derive_rng(seed, "bitconv", ep.party_id)
                session = open_session(ep, f, b"bitconv", prng)
                party = Party(session, prng, t)
                shared = additive_to_shamir(party, [addends[ep.party_id - 1]])
                before_mults, before_rounds = party.bgw_mults, session.stats.rounds
                before_bytes = session.stats.bytes_sent
                start = time.perf_counter()
                out = threshold_release(party, shared, cfg)
                return (
                    out[0],
                    time.perf_counter() - start,
                    party.bgw_mults - before_mults,
                    session.stats.rounds - before_rounds,
                    session.stats.bytes_sent - before_bytes,
                )

            try:
                outs = net.run(job)
            except (TransportError, ParameterError) as exc:
                rec.status = f"failed: {exc}"
                records.append(rec)
                continue
            released, _, rec.bgw_mults, rec.rounds, rec.bytes_sent = outs[0]
            rec.server_ms = 1000 * max(o[1] for o in outs)
            expected = total if total >= thresh else 0
            if any(o[0] != expected for o in outs):
                rec.status = f"mismatch: got {released}, expected {expected}"
            records.append(rec)
    _maybe_write(spec, records)
    return records


def _maybe_write(spec: BenchSpec, records: list[BenchRecord]) -> None:
    if spec.out is not None:
        Path(spec.out).write_text(records_to_csv(records))


def records_to_csv(records: list[BenchRecord]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        row = dataclasses.asdict(rec)
        for col in _FLOAT_COLUMNS:
            row[col] = f"{row[col]:.3f}"
        writer.writerow(row)
    return buf.getvalue()


def records_from_csv(text: str) -> list[BenchRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    out = []
    for row in reader:
        kwargs: dict[str, Any] = dict(row)
        for col in _INT_COLUMNS:
            kwargs[col] = int(kwargs[col])
        for col in _FLOAT_COLUMNS:
            kwargs[col] = float(kwargs[col])
        out.append(BenchRecord(**kwargs))
    return out
