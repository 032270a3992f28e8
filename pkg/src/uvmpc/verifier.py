"""Verifier side: secure summation of blinded shares and the unit-vector check."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .client import BlindMode, Submission
from .field import FieldParams, ParameterError, Rng
from .transport import MsgType, Session


def additive_split(x: int, k: int, f: FieldParams, rng: Rng) -> list[int]:
    """``k`` uniform addends summing to ``x`` mod p."""
    parts = [f.rand(rng) for _ in range(k - 1)]
    parts.append((x - sum(parts)) % f.p)
    return parts


def _resplit_round(session: Session, own_values: list[int], rng: Rng) -> list[int]:
    f = session.f
    parties = session.parties
    pos = {pid: j for j, pid in enumerate(parties)}
    k = len(own_values)
    addends = [additive_split(x, len(parties), f, rng) for x in own_values]
    outbound = {
        peer: f.encode_vec([addends[row][pos[peer]] for row in range(k)]) for peer in session.peers
    }
    inbound = session.exchange(MsgType.RESPLIT_ADDEND, outbound)
    me = pos[session.party_id]
    partials = [addends[row][me] for row in range(k)]
    for payload in inbound.values():
        partials = [(a + b) % f.p for a, b in zip(partials, f.decode_vec(payload, k))]
    return partials


def _partials_round(session: Session, partials: list[int]) -> list[int]:
    f = session.f
    inbound = session.broadcast(MsgType.PARTIALS_BROADCAST, f.encode_vec(partials))
    sums = partials
    for payload in inbound.values():
        sums = [(a + b) % f.p for a, b in zip(sums, f.decode_vec(payload, len(partials)))]
    return sums


def secure_sum(session: Session, own_values: list[int], rng: Rng) -> list[int]:
    """Sum, entry by entry, the vectors held by all parties.

    Two rounds: every party splits each of its values into one uniform
    addend per party and sends each peer its addends (RESPLIT_ADDEND); the
    received addends are summed into partials, which are broadcast
    (PARTIALS_BROADCAST) and summed.  Any coalition missing one honest
    party sees only uniform addends plus the final totals.
    """
    return _partials_round(session, _resplit_round(session, own_values, rng))


def validate(mode: BlindMode | str, sums: list[int], f: FieldParams) -> bool:
    """Unit-vector check on the summed shares.

    Square: ``sums[i] == sums[0] ** (i+1)``; Product: last entry is the
    product of the others; Inverse: product of all entries is 1.  Any zero
    entry rejects, which is what turns away the all-zero vector.
    """
    mode = BlindMode.parse(mode)
    p = f.p
    if len(sums) < 2 or any(s % p == 0 for s in sums):
        return False
    if mode is BlindMode.SQUARE:
        acc = sums[0]
        for s in sums[1:]:
            acc = acc * sums[0] % p
            if acc != s:
                return False
        return True
    if mode is BlindMode.PRODUCT:
        return math.prod(sums[:-1]) % p == sums[-1]
    return math.prod(sums) % p == 1


class Stage(enum.Enum):
    INPUT = "input"
    RESPLIT = "resplit"
    PARTIALS = "partials"
    SUMS = "sums"
    VERDICT = "verdict"


_ORDER = list(Stage)


@dataclass
class VerifySession:
    """One verifier's view of a batch of verification queries.

    Each query is an independent instance of the two-round sum; a batch
    shares its round trips.
    """

    session: Session
    submissions: list[Submission]
    stage: Stage = Stage.INPUT
    sums: list[list[int]] = field(default_factory=list)
    verdicts: list[bool] = field(default_factory=list)

    def _advance(self, to: Stage) -> None:
        if _ORDER.index(to) != _ORDER.index(self.stage) + 1:
            raise RuntimeError(f"cannot move from {self.stage.value} to {to.value}")
        self.stage = to

    def run(self, rng: Rng) -> list[bool]:
        P = self.session.n_parties
        for sub in self.submissions:
            if sub.p_count != P:
                raise ParameterError(f"submission is for {sub.p_count} verifiers, roster has {P}")
        flat = [x for sub in self.submissions for x in sub.share]
        self._advance(Stage.RESPLIT)
        partials = _resplit_round(self.session, flat, rng)
        self._advance(Stage.PARTIALS)
        totals = _partials_round(self.session, partials)
        self._advance(Stage.SUMS)
        self.sums = [totals[i : i + P] for i in range(0, len(totals), P)]
        self._advance(Stage.VERDICT)
        self.verdicts = [
            validate(sub.mode, s, self.session.f) for sub, s in zip(self.submissions, self.sums)
        ]
        return self.verdicts
