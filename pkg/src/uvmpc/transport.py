"""Round-synchronised message exchange between parties.

Two interchangeable substrates carry the same :class:`Frame` objects:

* :class:`SimNetwork`, an in-process network where every party runs in its
  own thread and frames go through per-party mailboxes, and
* :class:`TcpEndpoint`, one party of a full-mesh TCP roster.

Protocol code only sees :class:`Session`, whose :meth:`Session.exchange`
sends one payload to each peer and blocks until one payload from each peer
has arrived for the same round.

Wire format of a frame::

    length (4, big-endian) | msg_type (1) | session_id (16) | sender (2) | payload

where ``length`` counts everything after itself.  Party 0 is reserved for
clients; verifiers are numbered 1..P and the number doubles as the Shamir
evaluation point.
"""

from __future__ import annotations

import enum
import hashlib
import logging
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

from .field import FieldParams, Rng

log = logging.getLogger(__name__)

HEADER = struct.Struct(">IB16sH")
MAX_PAYLOAD = 2**32 - 24
ZERO_SESSION = bytes(16)
CLIENT = 0
DEFAULT_TIMEOUT = 30.0

T = TypeVar("T")


class MsgType(enum.IntEnum):
    SUBMIT = 0x01
    RESPLIT_ADDEND = 0x02
    PARTIALS_BROADCAST = 0x03
    VERDICT = 0x04
    SHAMIR_DEAL = 0x05
    MULT_RESHARE = 0x06
    REVEAL_SHARE = 0x07
    HANDSHAKE = 0x08
    HANDSHAKE_ACK = 0x09


CONTROL_TYPES = frozenset({MsgType.HANDSHAKE, MsgType.HANDSHAKE_ACK})


class TransportError(Exception):
    pass


class FrameError(TransportError):
    """Malformed, truncated, or unknown frame."""


class ProtocolAbort(TransportError):
    def __init__(self, message: str, party: int | None = None):
        super().__init__(message)
        self.party = party


class HandshakeError(TransportError):
    def __init__(self, message: str, parties: Sequence[int] = ()):
        super().__init__(message)
        self.parties = list(parties)


@dataclass(frozen=True)
class Frame:
    msg_type: int
    session_id: bytes
    sender: int
    payload: bytes = b""


def encode_frame(frame: Frame) -> bytes:
    if len(frame.session_id) != 16:
        raise FrameError("session id must be 16 bytes")
    if len(frame.payload) > MAX_PAYLOAD:
        raise FrameError("payload too large")
    length = HEADER.size - 4 + len(frame.payload)
    return HEADER.pack(length, frame.msg_type, frame.session_id, frame.sender) + frame.payload


def decode_frame(data: bytes) -> Frame:
    if len(data) < HEADER.size:
        raise FrameError(f"truncated frame ({len(data)} bytes)")
    length, msg_type, sid, sender = HEADER.unpack_from(data)
    if length != len(data) - 4:
        raise FrameError(f"declared length {length} but {len(data) - 4} bytes follow")
    if msg_type not in MsgType._value2member_map_:
        raise FrameError(f"unknown msg_type {msg_type:#04x}")
    return Frame(MsgType(msg_type), sid, sender, bytes(data[HEADER.size :]))


def iter_frames(data: bytes) -> Iterable[Frame]:
    """Decode a concatenation of frames, e.g. a saved transcript."""
    pos = 0
    while pos < len(data):
        if len(data) - pos < 4:
            raise FrameError("truncated length prefix")
        (length,) = struct.unpack_from(">I", data, pos)
        end = pos + 4 + length
        if end > len(data):
            raise FrameError("truncated frame")
        yield decode_frame(data[pos:end])
        pos = end


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed")
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> Frame:
    head = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", head)
    if length < HEADER.size - 4:
        raise FrameError("declared length shorter than header")
    return decode_frame(head + _recv_exact(sock, length))


# -- roster -------------------------------------------------------------------


@dataclass(frozen=True)
class PartyId:
    index: int
    address: str = ""

    @property
    def host_port(self) -> tuple[str, int]:
        host, _, port = self.address.rpartition(":")
        return host or "127.0.0.1", int(port)


def check_roster(roster: Sequence[PartyId]) -> None:
    indices = [p.index for p in roster]
    if len(set(indices)) != len(indices):
        raise HandshakeError(f"duplicate party index in roster {indices}")
    if sorted(indices) != list(range(1, len(indices) + 1)):
        raise HandshakeError(f"party indices must be 1..P, got {indices}")


def roster_digest(roster: Sequence[PartyId]) -> bytes:
    h = hashlib.sha256()
    for p in sorted(roster, key=lambda q: q.index):
        h.update(struct.pack(">H", p.index) + p.address.encode() + b"\0")
    return h.digest()


# -- mailbox and endpoints ----------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    session_id: bytes
    round: int
    msg_type: int
    sender: int
    receiver: int
    payload: bytes

    def frame(self) -> Frame:
        return Frame(self.msg_type, self.session_id, self.sender, self.payload)


class Mailbox:
    """Frames received by one party, FIFO per sender."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._frames: dict[int, list[Frame]] = {}
        self._failure: str | None = None

    def put(self, frame: Frame) -> None:
        with self._cond:
            self._frames.setdefault(frame.sender, []).append(frame)
            self._cond.notify_all()

    def fail(self, reason: str) -> None:
        with self._cond:
            self._failure = reason
            self._cond.notify_all()

    def take(
        self, sender: int, match: Callable[[Frame], bool], timeout: float
    ) -> Frame:
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                queue = self._frames.get(sender, [])
                for i, fr in enumerate(queue):
                    if match(fr):
                        return queue.pop(i)
                if self._failure is not None:
                    raise ProtocolAbort(
                        f"aborted while waiting for party {sender}: {self._failure}", sender
                    )
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ProtocolAbort(f"timed out waiting for party {sender}", sender)
                self._cond.wait(remaining)

    def take_any(self, match: Callable[[Frame], bool], timeout: float) -> Frame:
        """First matching frame from any sender, in sender order."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                for sender in sorted(self._frames):
                    queue = self._frames[sender]
                    for i, fr in enumerate(queue):
                        if match(fr):
                            return queue.pop(i)
                if self._failure is not None:
                    raise ProtocolAbort(f"aborted: {self._failure}")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ProtocolAbort("timed out waiting for a frame")
                self._cond.wait(remaining)


class Endpoint:
    """One party's attachment to a network."""

    def __init__(self, party_id: int, roster: Sequence[PartyId], timeout: float = DEFAULT_TIMEOUT):
        self.party_id = party_id
        self.roster = list(roster)
        self.timeout = timeout
        self.mailbox = Mailbox()
        self.transcript: list[TranscriptEntry] = []
        self._log_lock = threading.Lock()

    @property
    def peers(self) -> list[int]:
        return [p.index for p in self.roster if p.index != self.party_id]

    def send(self, receiver: int, frame: Frame, round_no: int = 0) -> None:
        with self._log_lock:
            self.transcript.append(
                TranscriptEntry(
                    frame.session_id, round_no, frame.msg_type, frame.sender, receiver, frame.payload
                )
            )
        self._deliver(receiver, frame)

    def _deliver(self, receiver: int, frame: Frame) -> None:
        raise NotImplementedError

    def recv(self, sender: int, session_id: bytes, msg_type: int | None = None) -> Frame:
        fr = self.mailbox.take(sender, lambda f: f.session_id == session_id, self.timeout)
        if msg_type is not None and fr.msg_type != msg_type:
            raise FrameError(
                f"party {self.party_id} expected {MsgType(msg_type).name} from {sender}, "
                f"got {MsgType(fr.msg_type).name}"
            )
        return fr

    def close(self) -> None:
        pass


# -- sessions -----------------------------------------------------------------


@dataclass
class SessionStats:
    rounds: int = 0
    frames: int = 0
    bytes_sent: int = 0
    by_type: dict[int, int] = field(default_factory=dict)


class Session:
    """A protocol instance among the verifier roster, identified by a 16-byte id."""

    def __init__(self, endpoint: Endpoint, session_id: bytes, f: FieldParams, tag: bytes = b""):
        self.endpoint = endpoint
        self.session_id = session_id
        self.f = f
        self.tag = tag
        self.round = 0
        self.stats = SessionStats()

    @property
    def party_id(self) -> int:
        return self.endpoint.party_id

    @property
    def parties(self) -> list[int]:
        return sorted(p.index for p in self.endpoint.roster)

    @property
    def peers(self) -> list[int]:
        return self.endpoint.peers

    @property
    def n_parties(self) -> int:
        return len(self.endpoint.roster)

    def exchange(self, msg_type: MsgType, outbound: dict[int, bytes]) -> dict[int, bytes]:
        """Send ``outbound[peer]`` to every peer; return one payload per peer."""
        self.round += 1
        counted = msg_type not in CONTROL_TYPES
        for peer in self.peers:
            payload = outbound.get(peer, b"")
            self.endpoint.send(
                peer, Frame(msg_type, self.session_id, self.party_id, payload), self.round
            )
            if counted:
                self.stats.frames += 1
                self.stats.bytes_sent += len(payload)
                self.stats.by_type[msg_type] = self.stats.by_type.get(msg_type, 0) + len(payload)
        if counted:
            self.stats.rounds += 1
        return {
            peer: self.endpoint.recv(peer, self.session_id, msg_type).payload
            for peer in self.peers
        }

    def broadcast(self, msg_type: MsgType, payload: bytes) -> dict[int, bytes]:
        return self.exchange(msg_type, {peer: payload for peer in self.peers})


def _hello(f: FieldParams, roster: Sequence[PartyId], tag: bytes) -> bytes:
    pb = f.p.to_bytes(f.enc_width, "big")
    return (
        struct.pack(">H", len(pb)) + pb + roster_digest(roster)
        + struct.pack(">H", len(tag)) + tag
    )


def _hello_tag(payload: bytes) -> bytes:
    (plen,) = struct.unpack_from(">H", payload)
    pos = 2 + plen + 32
    (tlen,) = struct.unpack_from(">H", payload, pos)
    return payload[pos + 2 : pos + 2 + tlen]


def open_session(endpoint: Endpoint, f: FieldParams, tag: bytes, rng: Rng) -> Session:
    """Agree on a fresh session id and check that all parties share parameters.

    The lowest-indexed party picks a random id and announces it with a
    HANDSHAKE frame; every party then broadcasts a HANDSHAKE_ACK echoing
    the id together with its field and roster, and compares what it got.
    """
    check_roster(endpoint.roster)
    hello = _hello(f, endpoint.roster, tag)
    initiator = min(p.index for p in endpoint.roster)
    if endpoint.party_id == initiator:
        sid = bytes(rng.randrange(256) for _ in range(16))
        for peer in endpoint.peers:
            endpoint.send(peer, Frame(MsgType.HANDSHAKE, sid, endpoint.party_id, hello))
    else:
        fr = endpoint.mailbox.take(
            initiator,
            lambda fr: fr.msg_type == MsgType.HANDSHAKE and _hello_tag(fr.payload) == tag,
            endpoint.timeout,
        )
        sid = fr.session_id
    session = Session(endpoint, sid, f, tag)
    acks = session.broadcast(MsgType.HANDSHAKE_ACK, hello)
    bad = sorted(peer for peer, payload in acks.items() if payload != hello)
    if bad:
        raise HandshakeError(
            f"party {endpoint.party_id}: parameter mismatch with part{'y' if len(bad) == 1 else 'ies'} "
            + ", ".join(map(str, bad)),
            bad,
        )
    session.round = 0
    return session


# -- in-process simulator -----------------------------------------------------


class SimEndpoint(Endpoint):
    def __init__(self, network: SimNetwork, party_id: int, roster: Sequence[PartyId], timeout: float):
        super().__init__(party_id, roster, timeout)
        self.network = network

    def _deliver(self, receiver: int, frame: Frame) -> None:
        if self.network.delay:
            time.sleep(self.network.delay)
        self.network.endpoints[receiver].mailbox.put(frame)


class SimNetwork:
    """Deterministic in-process network for P verifiers plus a client slot.

    Each call to :meth:`run` executes one function per party in its own
    thread.  Outputs and transcripts depend only on the parties' inputs and
    RNG seeds, never on thread scheduling.
    """

    def __init__(self, n_parties: int, timeout: float = DEFAULT_TIMEOUT, delay: float = 0.0):
        self.roster = [PartyId(i, f"sim:{i}") for i in range(1, n_parties + 1)]
        self.delay = delay
        self.endpoints: dict[int, SimEndpoint] = {
            i: SimEndpoint(self, i, self.roster, timeout) for i in range(0, n_parties + 1)
        }

    @property
    def client(self) -> SimEndpoint:
        return self.endpoints[CLIENT]

    def fail(self, reason: str) -> None:
        for ep in self.endpoints.values():
            ep.mailbox.fail(reason)

    def run(self, fn: Callable[[Endpoint], T], parties: Iterable[int] | None = None) -> list[T]:
        """Run ``fn(endpoint)`` for each party concurrently; results in party order."""
        ids = list(parties) if parties is not None else [p.index for p in self.roster]
        return run_parties({i: (lambda ep=self.endpoints[i]: fn(ep)) for i in ids}, self.fail)

    def transcript(self) -> list[TranscriptEntry]:
        entries = [e for ep in self.endpoints.values() for e in ep.transcript]
        return sorted(entries, key=lambda e: (e.session_id, e.round, e.sender, e.receiver, e.msg_type))


def run_parties(jobs: dict[int, Callable[[], T]], on_failure: Callable[[str], None]) -> list[T]:
    results: dict[int, T] = {}
    errors: dict[int, BaseException] = {}

    def target(pid: int, job: Callable[[], T]) -> None:
        try:
            results[pid] = job()
        except BaseException as exc:  # noqa: BLE001
            errors[pid] = exc
            on_failure(f"party {pid} failed: {exc}")

    threads = [
        threading.Thread(target=target, args=(pid, job), name=f"party-{pid}", daemon=True)
        for pid, job in jobs.items()
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        # Prefer the root cause over the aborts it triggered in other parties.
        primary = [e for e in errors.values() if not isinstance(e, ProtocolAbort)]
        raise (primary or list(errors.values()))[0]
    return [results[pid] for pid in jobs]


# -- TCP ----------------------------------------------------------------------


class TcpEndpoint(Endpoint):
    """A verifier in a full-mesh TCP roster.

    Outgoing frames to peer ``j`` use a connection this party opens to ``j``;
    incoming frames arrive on connections accepted by the listener.  Clients
    (party 0) connect to the listener as well and receive replies on the
    connection their SUBMIT arrived on.
    """

    def __init__(
        self,
        party_id: int,
        roster: Sequence[PartyId],
        listen: tuple[str, int] | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        super().__init__(party_id, roster, timeout)
        me = next(p for p in roster if p.index == party_id)
        self._server = socket.create_server(listen or me.host_port, reuse_port=False)
        self._server.settimeout(0.2)
        self._out: dict[int, socket.socket] = {}
        self._out_lock = threading.Lock()
        self._client_socks: dict[bytes, socket.socket] = {}
        self._closed = threading.Event()
        self._readers: list[threading.Thread] = []
        self._acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        self._acceptor.start()

    @property
    def address(self) -> tuple[str, int]:
        return self._server.getsockname()[:2]

    def _accept_loop(self) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = self._server.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            th = threading.Thread(target=self._read_loop, args=(conn,), daemon=True)
            th.start()
            self._readers.append(th)

    def _read_loop(self, conn: socket.socket) -> None:
        try:
            while not self._closed.is_set():
                fr = read_frame(conn)
                if fr.sender == CLIENT:
                    self._client_socks[fr.session_id] = conn
                self.mailbox.put(fr)
        except FrameError as exc:
            log.warning("party %d dropped malformed frame: %s", self.party_id, exc)
            self.mailbox.fail(f"malformed frame: {exc}")
        except (ConnectionError, OSError):
            pass

    def _connect(self, receiver: int) -> socket.socket:
        peer = next(p for p in self.roster if p.index == receiver)
        deadline = time.monotonic() + self.timeout
        while True:
            try:
                sock = socket.create_connection(peer.host_port, timeout=self.timeout)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                return sock
            except OSError:
                if time.monotonic() > deadline:
                    raise ProtocolAbort(f"cannot connect to party {receiver}", receiver) from None
                time.sleep(0.05)

    def _deliver(self, receiver: int, frame: Frame) -> None:
        data = encode_frame(frame)
        if receiver == CLIENT:
            sock = self._client_socks[frame.session_id]
            sock.sendall(data)
            return
        with self._out_lock:
            sock = self._out.get(receiver)
            if sock is None:
                sock = self._out[receiver] = self._connect(receiver)
            sock.sendall(data)

    def close(self) -> None:
        self._closed.set()
        self._server.close()
        for sock in list(self._out.values()) + list(self._client_socks.values()):
            try:
                sock.close()
            except OSError:
                pass


def parse_roster(spec: str | Sequence[str]) -> list[PartyId]:
    """``"host:port,host:port,..."`` -> roster with indices 1..P."""
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    return [PartyId(i, addr.strip()) for i, addr in enumerate(items, 1)]


def client_roundtrip(
    roster: Sequence[PartyId], session_id: bytes, payloads: dict[int, bytes], timeout: float
) -> dict[int, Frame]:
    """Send one SUBMIT per verifier over TCP and wait for each VERDICT."""
    replies: dict[int, Frame] = {}
    socks = {}
    try:
        for p in roster:
            sock = socket.create_connection(p.host_port, timeout=timeout)
            socks[p.index] = sock
            sock.sendall(encode_frame(Frame(MsgType.SUBMIT, session_id, CLIENT, payloads[p.index])))
        for idx, sock in socks.items():
            sock.settimeout(timeout)
            try:
                replies[idx] = read_frame(sock)
            except (socket.timeout, ConnectionError) as exc:
                raise ProtocolAbort(f"no verdict from party {idx}: {exc}", idx) from None
    finally:
        for sock in socks.values():
            sock.close()
    return replies
