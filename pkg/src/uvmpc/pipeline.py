"""End-to-end runs: clients submit, verifiers validate and aggregate.

:func:`verifier_main` is the complete job of one verifier and is shared by
the simulator, the localhost TCP runner and the ``uvmpc verifier`` daemon.
Every query is verified in its own session; sessions run concurrently on
a small worker pool, in the same order at every party so the pool cannot
deadlock.  Accepted inputs are then aggregated in one more session.
"""

from __future__ import annotations

import hashlib
import random
import socket
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .bitconv import AggregationConfig, threshold_release
from .client import BlindMode, Submission, make_submissions
from .field import FieldParams, OpCounts, Rng, count_ops, make_rng
from .shamir import Party, additive_to_shamir
from .transport import (
    CLIENT,
    DEFAULT_TIMEOUT,
    Endpoint,
    Frame,
    MsgType,
    PartyId,
    ProtocolAbort,
    SimNetwork,
    TcpEndpoint,
    TranscriptEntry,
    encode_frame,
    open_session,
    read_frame,
    run_parties,
)
from .verifier import VerifySession


@dataclass
class RunConfig:
    mode: BlindMode | str = BlindMode.SQUARE
    aggregate: bool = False
    thresh: int = 0
    t: int | None = None
    naive: bool = False
    workers: int = 4
    timeout: float = DEFAULT_TIMEOUT
    seed: int | str | None = None


@dataclass
class VerifierResult:
    party_id: int
    query_ids: list[bytes]
    verdicts: list[bool]
    sums: list[list[int]]
    released: list[int] | None = None
    verify_rounds: int = 0
    verify_bytes: int = 0
    agg_rounds: int = 0
    agg_bytes: int = 0
    bgw_mults: int = 0
    reveals: list[tuple[int, int]] = field(default_factory=list)
    verify_seconds: float = 0.0
    agg_seconds: float = 0.0


def derive_rng(seed: int | str | None, *labels: object) -> Rng:
    """Independent stream per label path; system randomness when unseeded."""
    if seed is None:
        return make_rng(None)
    material = "/".join(str(x) for x in (seed, *labels)).encode()
    return random.Random(hashlib.sha256(material).digest())


def collect_submissions(endpoint: Endpoint, f: FieldParams, count: int) -> list[tuple[bytes, Submission]]:
    subs = []
    for _ in range(count):
        fr = endpoint.mailbox.take(
            CLIENT, lambda fr: fr.msg_type == MsgType.SUBMIT, endpoint.timeout
        )
        subs.append((fr.session_id, Submission.decode(fr.payload, f)))
    subs.sort(key=lambda item: item[0])
    return subs


def verifier_main(
    endpoint: Endpoint,
    f: FieldParams,
    cfg: RunConfig,
    n_clients: int,
) -> VerifierResult:
    me = endpoint.party_id
    subs = collect_submissions(endpoint, f, n_clients)
    qids = [qid for qid, _ in subs]

    def verify_one(item: tuple[bytes, Submission]) -> tuple[bool, list[int], int, int]:
        qid, sub = item
        rng = derive_rng(cfg.seed, "verify", me, qid.hex())
        session = open_session(endpoint, f, b"verify:" + qid, rng)
        vs = VerifySession(session, [sub])
        (ok,) = vs.run(rng)
        endpoint.send(CLIENT, Frame(MsgType.VERDICT, qid, me, bytes([ok])))
        return ok, vs.sums[0], session.stats.rounds, session.stats.bytes_sent

    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
        outcomes = list(pool.map(verify_one, subs))
    res = VerifierResult(
        me,
        qids,
        [o[0] for o in outcomes],
        [o[1] for o in outcomes],
        verify_rounds=max((o[2] for o in outcomes), default=0),
        verify_bytes=sum(o[3] for o in outcomes),
        verify_seconds=time.perf_counter() - start,
    )
    if not cfg.aggregate:
        return res

    start = time.perf_counter()
    accepted = [sub for sub, ok in zip((s for _, s in subs), res.verdicts) if ok]
    n = subs[0][1].n if subs else 0
    agg_cfg = AggregationConfig(cfg.thresh, len(accepted), f)
    agg_cfg.check()
    digest = hashlib.sha256(b"".join(q for q, ok in zip(qids, res.verdicts) if ok)).digest()
    rng = derive_rng(cfg.seed, "aggregate", me)
    session = open_session(endpoint, f, b"aggregate:" + digest, rng)
    party = Party(session, rng, cfg.t)
    column_shares = [sum(sub.agg[j] for sub in accepted) % f.p for j in range(n)]
    shared = additive_to_shamir(party, column_shares)
    res.released = threshold_release(party, shared, agg_cfg)
    res.agg_rounds = session.stats.rounds
    res.agg_bytes = session.stats.bytes_sent
    res.bgw_mults = party.bgw_mults
    res.reveals = list(party.reveals)
    res.agg_seconds = time.perf_counter() - start
    return res


@dataclass
class ClientOutput:
    query_id: bytes
    payloads: dict[int, bytes]
    ops: OpCounts
    seconds: float


def prepare_client(
    v: list[int], idx: int, p_count: int, f: FieldParams, cfg: RunConfig
) -> ClientOutput:
    rng = derive_rng(cfg.seed, "client", idx)
    qid = bytes(rng.randrange(256) for _ in range(16))
    start = time.perf_counter()
    with count_ops() as ops:
        subs = make_submissions(v, cfg.mode, p_count, f, rng, naive=cfg.naive)
    payloads = {i + 1: s.encode(f) for i, s in enumerate(subs)}
    return ClientOutput(qid, payloads, ops, time.perf_counter() - start)


@dataclass
class RunResult:
    f: FieldParams
    verifiers: list[VerifierResult]
    clients: list[ClientOutput]
    verdicts: list[bool]  # per client, in input order
    released: list[int] | None
    transcript: list[TranscriptEntry]

    @property
    def reveal_sequence(self) -> list[tuple[int, int]]:
        return self.verifiers[0].reveals


def _check_agreement(results: list[VerifierResult]) -> None:
    first = results[0]
    for r in results[1:]:
        if r.verdicts != first.verdicts or r.sums != first.sums or r.released != first.released:
            raise ProtocolAbort(f"verifier {r.party_id} disagrees with verifier {first.party_id}")


def _verdicts_for(clients: list[ClientOutput], replies: dict[bytes, dict[int, int]]) -> list[bool]:
    out = []
    for c in clients:
        votes = set(replies[c.query_id].values())
        if len(votes) != 1:
            raise ProtocolAbort(f"verifiers disagree on query {c.query_id.hex()}")
        out.append(votes.pop() == 1)
    return out


def run_sim(
    vectors: list[list[int]], p_count: int, f: FieldParams, cfg: RunConfig, delay: float = 0.0
) -> RunResult:
    """Whole pipeline on the in-process simulator."""
    net = SimNetwork(p_count, timeout=cfg.timeout, delay=delay)
    clients = [prepare_client(v, i, p_count, f, cfg) for i, v in enumerate(vectors)]
    for c in clients:
        for pid, payload in c.payloads.items():
            net.client.send(pid, Frame(MsgType.SUBMIT, c.query_id, CLIENT, payload))
    results = net.run(lambda ep: verifier_main(ep, f, cfg, len(clients)))
    _check_agreement(results)
    replies: dict[bytes, dict[int, int]] = {}
    for c in clients:
        for pid in range(1, p_count + 1):
            fr = net.client.recv(pid, c.query_id, MsgType.VERDICT)
            replies.setdefault(c.query_id, {})[pid] = fr.payload[0]
    return RunResult(
        f, results, clients, _verdicts_for(clients, replies), results[0].released, net.transcript()
    )


def run_tcp(vectors: list[list[int]], p_count: int, f: FieldParams, cfg: RunConfig) -> RunResult:
    """Whole pipeline over real sockets on localhost, one thread per party."""
    endpoints = [
        TcpEndpoint(i, [PartyId(i, "127.0.0.1:0")], listen=("127.0.0.1", 0), timeout=cfg.timeout)
        for i in range(1, p_count + 1)
    ]
    try:
        roster = [PartyId(ep.party_id, "%s:%d" % ep.address) for ep in endpoints]
        for ep in endpoints:
            ep.roster = roster
        clients = [prepare_client(v, i, p_count, f, cfg) for i, v in enumerate(vectors)]
        socks: list[tuple[ClientOutput, int, socket.socket]] = []
        for c in clients:
            for p in roster:
                sock = socket.create_connection(p.host_port, timeout=cfg.timeout)
                sock.sendall(encode_frame(Frame(MsgType.SUBMIT, c.query_id, CLIENT, c.payloads[p.index])))
                socks.append((c, p.index, sock))
        jobs = {ep.party_id: (lambda ep=ep: verifier_main(ep, f, cfg, len(clients))) for ep in endpoints}
        lock = threading.Lock()

        def fail(reason: str) -> None:
            with lock:
                for ep in endpoints:
                    ep.mailbox.fail(reason)

        results = run_parties(jobs, fail)
        _check_agreement(results)
        replies: dict[bytes, dict[int, int]] = {}
        for c, pid, sock in socks:
            fr = read_frame(sock)
            replies.setdefault(c.query_id, {})[pid] = fr.payload[0]
            sock.close()
        transcript = sorted(
            (e for ep in endpoints for e in ep.transcript),
            key=lambda e: (e.session_id, e.round, e.sender, e.receiver, e.msg_type),
        )
        return RunResult(
            f, results, clients, _verdicts_for(clients, replies), results[0].released, transcript
        )
    finally:
        for ep in endpoints:
            ep.close()
