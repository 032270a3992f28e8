"""Client side of unit-vector validation: split, blind, and package shares.

A client holding ``v`` (length N) and talking to P verifiers produces

* a P x N additive split whose columns sum to ``v``,
* a P x N blinding matrix ``L`` built in one of three modes,
* the P x P matrix ``Blind = L @ Split.T``,

and hands verifier ``i`` column ``i`` of ``Blind`` plus row ``i`` of the split
(the latter feeds aggregation).  Row sums of ``Blind`` equal ``L @ v``, so for
a unit vector ``e_k`` the verifiers end up holding column ``k`` of ``L``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .field import FieldParams, ParameterError, Rng

Matrix = list[list[int]]


class BlindMode(enum.IntEnum):
    """Blinding construction; the value doubles as the wire tag."""

    SQUARE = 0x01
    PRODUCT = 0x02
    INVERSE = 0x03

    @classmethod
    def parse(cls, name: str | int | BlindMode) -> BlindMode:
        if isinstance(name, BlindMode):
            return name
        if isinstance(name, int):
            return cls(name)
        try:
            return cls[name.upper()]
        except KeyError:
            raise ParameterError(f"unknown blinding mode {name!r}") from None


@dataclass(frozen=True)
class SplitMatrix:
    split: Matrix

    @property
    def p_count(self) -> int:
        return len(self.split)

    @property
    def n(self) -> int:
        return len(self.split[0])


@dataclass(frozen=True)
class LMatrix:
    l: Matrix  # noqa: E741
    mode: BlindMode
    r: Matrix


@dataclass(frozen=True)
class BlindMatrix:
    blind: Matrix


@dataclass(frozen=True)
class ShareColumn:
    verifier_index: int  # 1-based
    values: list[int]


@dataclass(frozen=True)
class AggShareRow:
    verifier_index: int  # 1-based
    values: list[int]


def unit_vector(n: int, k: int) -> list[int]:
    """One-hot vector of length ``n`` with the 1 at 0-based position ``k``."""
    if not 0 <= k < n:
        raise ParameterError(f"index {k} outside vector of length {n}")
    return [int(j == k) for j in range(n)]


def split_vector(v: list[int], p_count: int, f: FieldParams, rng: Rng) -> SplitMatrix:
    if p_count < 2:
        raise ParameterError("need at least two verifiers")
    if not v:
        raise ParameterError("empty input vector")
    rows = [[f.rand(rng) for _ in v] for _ in range(p_count - 1)]
    last = [(x - sum(col)) % f.p for x, col in zip(v, zip(*rows))]
    return SplitMatrix(rows + [last])


def build_l_matrix(
    mode: BlindMode,
    p_count: int,
    n: int,
    f: FieldParams,
    rng: Rng,
    naive: bool = False,
) -> LMatrix:
    """Blinding matrix for ``mode``.

    Square draws one nonzero value per column and fills row i with its i-th
    power, by repeated multiplication or, with ``naive``, by an independent
    exponentiation per entry.  Product and Inverse draw P-1 nonzero values
    per column; the last row holds their product or its inverse.
    """
    mode = BlindMode.parse(mode)
    if p_count < 2 or n < 1:
        raise ParameterError("need P >= 2 and N >= 1")
    if mode is BlindMode.SQUARE:
        r = [[f.rand_nonzero(rng) for _ in range(n)]]
        rows = [list(r[0])]
        for i in range(2, p_count + 1):
            if naive:
                rows.append([f.pow(x, i) for x in r[0]])
            else:
                rows.append([f.mul(a, x) for a, x in zip(rows[-1], r[0])])
        return LMatrix(rows, mode, r)

    r = [[f.rand_nonzero(rng) for _ in range(n)] for _ in range(p_count - 1)]
    last = []
    for col in zip(*r):
        acc = 1
        for x in col:
            acc = f.mul(acc, x)
        last.append(f.inv(acc) if mode is BlindMode.INVERSE else acc)
    return LMatrix([list(row) for row in r] + [last], mode, r)


def blind(l: LMatrix, s: SplitMatrix, f: FieldParams) -> BlindMatrix:  # noqa: E741
    lm, sm = l.l, s.split
    if len(lm) != len(sm) or len(lm[0]) != len(sm[0]):
        raise ParameterError(
            f"L is {len(lm)}x{len(lm[0])} but Split is {len(sm)}x{len(sm[0])}"
        )
    p = f.p
    return BlindMatrix(
        [[sum(a * b for a, b in zip(lrow, srow)) % p for srow in sm] for lrow in lm]
    )


def package_shares(b: BlindMatrix) -> list[ShareColumn]:
    return [ShareColumn(i + 1, list(col)) for i, col in enumerate(zip(*b.blind))]


def package_agg_shares(s: SplitMatrix) -> list[AggShareRow]:
    return [AggShareRow(i + 1, list(row)) for i, row in enumerate(s.split)]


@dataclass(frozen=True)
class Submission:
    """What one verifier receives from one client."""

    mode: BlindMode
    share: list[int]  # P-long column of Blind
    agg: list[int]  # N-long row of Split

    @property
    def p_count(self) -> int:
        return len(self.share)

    @property
    def n(self) -> int:
        return len(self.agg)

    def encode(self, f: FieldParams) -> bytes:
        head = struct.pack(">BIH", int(self.mode), self.n, self.p_count)
        return head + f.encode_vec(self.share) + f.encode_vec(self.agg)

    @classmethod
    def decode(cls, data: bytes, f: FieldParams) -> Submission:
        if len(data) < 7:
            raise ParameterError("truncated submission")
        tag, n, p_count = struct.unpack(">BIH", data[:7])
        try:
            mode = BlindMode(tag)
        except ValueError:
            raise ParameterError(f"unknown mode tag {tag:#04x}") from None
        w = f.enc_width
        if len(data) != 7 + (p_count + n) * w:
            raise ParameterError("submission length does not match its header")
        split_at = 7 + p_count * w
        return cls(mode, f.decode_vec(data[7:split_at]), f.decode_vec(data[split_at:]))


def make_submissions(
    v: list[int],
    mode: BlindMode | str,
    p_count: int,
    f: FieldParams,
    rng: Rng,
    naive: bool = False,
) -> list[Submission]:
    """Full client pipeline: one :class:`Submission` per verifier."""
    mode = BlindMode.parse(mode)
    s = split_vector(v, p_count, f, rng)
    l = build_l_matrix(mode, p_count, len(v), f, rng, naive=naive)  # noqa: E741
    shares = package_shares(blind(l, s, f))
    rows = package_agg_shares(s)
    return [Submission(mode, sc.values, ar.values) for sc, ar in zip(shares, rows)]
