"""Shamir sharing and the BGW operations built on it.

Local functions (:func:`shamir_share`, :func:`shamir_reconstruct`) work on
explicit :class:`ShamirShare` lists.  Interactive protocols run inside a
:class:`Party`, which holds one verifier's share of each secret as a bare
int; those protocols are vectorised so that many independent instances
share each round trip.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from functools import lru_cache

from .field import FieldParams, ParameterError, Rng
from .transport import MsgType, ProtocolAbort, Session


class RevealPurpose(enum.IntEnum):
    """Why a value is opened; carried as the first byte of REVEAL_SHARE."""

    SQUARE = 0x01  # r^2 while sampling a random bit
    MASKED = 0x02  # c = a - b during bit decomposition
    ACCEPT = 0x03  # b < p rejection-sampling flag
    OUTPUT = 0x04  # gated aggregate


ALLOWED_REVEALS = frozenset(RevealPurpose)


@dataclass(frozen=True)
class ShamirShare:
    party_id: int
    value: int


def max_degree(p_count: int) -> int:
    return (p_count - 1) // 2


def check_degree(t: int, p_count: int) -> None:
    if not 0 <= t <= max_degree(p_count):
        raise ParameterError(f"degree t={t} needs 0 <= t <= {max_degree(p_count)} for P={p_count}")


def eval_poly(coeffs: list[int], x: int, p: int) -> int:
    y = 0
    for c in reversed(coeffs):
        y = (y * x + c) % p
    return y


def shamir_share(secret: int, t: int, p_count: int, f: FieldParams, rng: Rng) -> list[ShamirShare]:
    """Shares of ``secret`` on a random polynomial of degree at most ``t``."""
    check_degree(t, p_count)
    coeffs = [secret % f.p] + [f.rand(rng) for _ in range(t)]
    return [ShamirShare(i, eval_poly(coeffs, i, f.p)) for i in range(1, p_count + 1)]


@lru_cache(maxsize=4096)
def lagrange_at_zero(xs: tuple[int, ...], p: int) -> tuple[int, ...]:
    coeffs = []
    for i, xi in enumerate(xs):
        num, den = 1, 1
        for j, xj in enumerate(xs):
            if j != i:
                num = num * (-xj) % p
                den = den * (xi - xj) % p
        coeffs.append(num * pow(den, p - 2, p) % p)
    return tuple(coeffs)


def shamir_reconstruct(shares: list[ShamirShare], f: FieldParams, t: int | None = None) -> int:
    """Lagrange interpolation at zero through the given shares."""
    xs = tuple(s.party_id for s in shares)
    if len(set(xs)) != len(xs):
        raise ParameterError(f"duplicate party ids {xs}")
    if t is not None and len(shares) < t + 1:
        raise ParameterError(f"need {t + 1} shares, got {len(shares)}")
    if not shares:
        raise ParameterError("no shares")
    lam = lagrange_at_zero(xs, f.p)
    return sum(c * s.value for c, s in zip(lam, shares)) % f.p


def _pack(f: FieldParams, values: list[int]) -> bytes:
    return struct.pack(">I", len(values)) + f.encode_vec(values)


def _unpack(f: FieldParams, data: bytes, expected: int) -> list[int]:
    (count,) = struct.unpack_from(">I", data)
    if count != expected:
        raise ProtocolAbort(f"expected {expected} elements, got {count}")
    return f.decode_vec(data[4:], count)


@dataclass
class Party:
    """One verifier's state for arithmetic on Shamir-shared values."""

    session: Session
    rng: Rng
    t: int | None = None
    bgw_mults: int = 0
    reveals: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.t is None:
            self.t = max_degree(self.n)
        check_degree(self.t, self.n)

    @property
    def f(self) -> FieldParams:
        return self.session.f

    @property
    def pid(self) -> int:
        return self.session.party_id

    @property
    def n(self) -> int:
        return self.session.n_parties

    def deal(self, values: list[int], msg_type: MsgType = MsgType.SHAMIR_DEAL) -> list[list[int]]:
        """Share each of our values to everyone; return what each dealer sent us.

        The result is indexed by dealer position (party ``i`` at ``i-1``).
        """
        f, k = self.f, len(values)
        polys = [[v % f.p] + [f.rand(self.rng) for _ in range(self.t)] for v in values]
        outbound = {
            peer: _pack(f, [eval_poly(c, peer, f.p) for c in polys]) for peer in self.session.peers
        }
        inbound = self.session.exchange(msg_type, outbound)
        received = []
        for pid in self.session.parties:
            if pid == self.pid:
                received.append([eval_poly(c, pid, f.p) for c in polys])
            else:
                received.append(_unpack(f, inbound[pid], k))
        return received

    def sum_dealt(self, values: list[int]) -> list[int]:
        p = self.f.p
        return [sum(col) % p for col in zip(*self.deal(values))] if values else []

    def mul(self, a: list[int], b: list[int]) -> list[int]:
        """BGW multiplication with re-share-and-recombine degree reduction."""
        if len(a) != len(b):
            raise ParameterError("operand batches differ in length")
        if 2 * self.t >= self.n:
            raise ParameterError(f"2t={2 * self.t} must be below P={self.n}")
        if not a:
            return []
        p = self.f.p
        local = [x * y % p for x, y in zip(a, b)]
        dealt = self.deal(local, MsgType.MULT_RESHARE)
        lam = lagrange_at_zero(tuple(self.session.parties), p)
        self.bgw_mults += len(a)
        return [sum(c * d[i] for c, d in zip(lam, dealt)) % p for i in range(len(a))]

    def reveal(self, shares: list[int], purpose: RevealPurpose) -> list[int]:
        if not shares:
            return []
        f = self.f
        payload = bytes([purpose]) + _pack(f, shares)
        inbound = self.session.broadcast(MsgType.REVEAL_SHARE, payload)
        by_party = {self.pid: shares}
        for pid, data in inbound.items():
            if data[0] != purpose:
                raise ProtocolAbort(f"party {pid} opened purpose {data[0]}, expected {purpose}", pid)
            by_party[pid] = _unpack(f, data[1:], len(shares))
        xs = tuple(sorted(by_party))
        lam = lagrange_at_zero(xs, f.p)
        self.reveals.append((int(purpose), len(shares)))
        return [sum(c * by_party[x][i] for c, x in zip(lam, xs)) % f.p for i in range(len(shares))]


def bgw_mul(party: Party, a: list[int], b: list[int]) -> list[int]:
    return party.mul(a, b)


def rand_shared_elem(party: Party, k: int) -> list[int]:
    """``k`` shared field elements, each the sum of one uniform value per party."""
    return party.sum_dealt([party.f.rand(party.rng) for _ in range(k)])


def additive_to_shamir(party: Party, own_additive: list[int]) -> list[int]:
    """Turn additive shares held one per party into Shamir shares of their total."""
    return party.sum_dealt(list(own_additive))


def canonical_sqrt(x: int, f: FieldParams) -> int:
    root = f.sqrt(x)
    if root is None:
        raise ValueError(f"{x} is not a square mod {f.p}")
    return root if root <= (f.p - 1) // 2 else f.p - root


MAX_BIT_RETRIES = 128


def rand_shared_bit(party: Party, k: int) -> list[int]:
    """``k`` shared uniform bits.

    For shared uniform r, open r^2 and take its canonical root s; r/s is
    +1 or -1 with equal probability, so (r/s + 1)/2 is a fair bit.
    """
    f = party.f
    p = f.p
    if p % 2 == 0:
        raise ParameterError("random bits need an odd modulus")
    inv2 = (p + 1) // 2
    out: list[int | None] = [None] * k
    pending = list(range(k))
    for _ in range(MAX_BIT_RETRIES):
        if not pending:
            break
        r = rand_shared_elem(party, len(pending))
        squares = party.reveal(party.mul(r, r), RevealPurpose.SQUARE)
        retry = []
        for idx, ri, s2 in zip(pending, r, squares):
            if s2 == 0:
                retry.append(idx)
                continue
            s_inv = pow(canonical_sqrt(s2, f), p - 2, p)
            out[idx] = (ri * s_inv + 1) * inv2 % p
        pending = retry
    if pending:
        raise ProtocolAbort(f"random bit sampling hit zero {MAX_BIT_RETRIES} times")
    return out  # type: ignore[return-value]
