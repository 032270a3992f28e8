"""Bit decomposition of shared values and threshold-gated release.

All functions are batched: a ``BitShares`` batch is a list of instances,
each a list of this party's shares of the instance's bits, least
significant first.  Ripple-carry adders keep the multiplication count
linear in the width; each bit position costs one round for the whole
batch.
"""

from __future__ import annotations

from dataclasses import dataclass

from .field import FieldParams, ParameterError
from .shamir import Party, RevealPurpose, rand_shared_bit
from .transport import ProtocolAbort

BitShares = list[int]

MAX_SAMPLE_ATTEMPTS = 64


def _check_widths(batch: list[BitShares]) -> int:
    widths = {len(x) for x in batch}
    if len(widths) > 1:
        raise ParameterError(f"mixed widths in batch: {sorted(widths)}")
    return widths.pop() if widths else 0


def bitlt_shared_pub(party: Party, xs: list[BitShares], q: int) -> list[int]:
    """Shared ``[x < q]`` for each instance, ``q`` public.

    Borrow ripple of ``x - q``:
    ``borrow' = (1 - x_i) q_i + borrow * (1 - x_i - q_i + 2 x_i q_i)``.
    """
    if not xs:
        return []
    width = _check_widths(xs)
    if q >= 1 << width:
        raise ParameterError(f"comparand {q} does not fit in {width} bits")
    p = party.f.p
    borrow = [0] * len(xs)
    for i in range(width):
        qi = (q >> i) & 1
        # (1 - x - q + 2xq) is linear in x once q is public
        keep = [(1 - qi - x[i] + 2 * qi * x[i]) % p for x in xs]
        carried = party.mul(borrow, keep)
        borrow = [((1 - x[i]) * qi + c) % p for x, c in zip(xs, carried)]
    return borrow


def bitadd_pub_shared(party: Party, cs: list[int], bs: list[BitShares]) -> list[BitShares]:
    """Public ``c`` plus shared bits ``b``; result is one bit wider."""
    if len(cs) != len(bs):
        raise ParameterError("one public addend per instance required")
    width = _check_widths(bs)
    if any(c >> width for c in cs):
        raise ParameterError(f"public addend wider than {width} bits")
    p = party.f.p
    carry = [0] * len(bs)
    out: list[BitShares] = [[] for _ in bs]
    for i in range(width):
        xs = [(c >> i) & 1 for c in cs]
        u = [(1 - b[i]) % p if x else b[i] for x, b in zip(xs, bs)]
        cu = party.mul(carry, u)
        for o, ui, ci, cui in zip(out, u, carry, cu):
            o.append((ui + ci - 2 * cui) % p)
        carry = [(x * b[i] + cui) % p for x, b, cui in zip(xs, bs, cu)]
    for o, ci in zip(out, carry):
        o.append(ci)
    return out


def bitadd_shared_shared(party: Party, xs: list[BitShares], ys: list[BitShares]) -> list[BitShares]:
    """Shared plus shared; carry-out included as the top bit."""
    if len(xs) != len(ys):
        raise ParameterError("operand batches differ in length")
    width = _check_widths(xs + ys)
    p = party.f.p
    # x_i * y_i does not depend on the carry, so all of them share one round.
    flat_xy = party.mul([x[i] for x in xs for i in range(width)], [y[i] for y in ys for i in range(width)])
    xy = [flat_xy[k * width : (k + 1) * width] for k in range(len(xs))]
    carry = [0] * len(xs)
    out: list[BitShares] = [[] for _ in xs]
    for i in range(width):
        u = [(x[i] + y[i] - 2 * m[i]) % p for x, y, m in zip(xs, ys, xy)]
        cu = party.mul(carry, u)
        for o, ui, ci, cui in zip(out, u, carry, cu):
            o.append((ui + ci - 2 * cui) % p)
        carry = [(m[i] + cui) % p for m, cui in zip(xy, cu)]
    for o, ci in zip(out, carry):
        o.append(ci)
    return out


def bitwise_random(party: Party, k: int, width: int | None = None) -> list[BitShares]:
    """``k`` shared values uniform on ``[0, p)``, as bits.

    Candidates of ``width`` random bits are compared against ``p`` and only
    the outcome of that comparison is opened.
    """
    f = party.f
    width = f.lam if width is None else width
    out: list[BitShares | None] = [None] * k
    pending = list(range(k))
    for _ in range(MAX_SAMPLE_ATTEMPTS):
        if not pending:
            break
        flat = rand_shared_bit(party, len(pending) * width)
        cands = [flat[j * width : (j + 1) * width] for j in range(len(pending))]
        flags = party.reveal(bitlt_shared_pub(party, cands, f.p), RevealPurpose.ACCEPT)
        retry = []
        for idx, cand, ok in zip(pending, cands, flags):
            if ok == 1:
                out[idx] = cand
            else:
                retry.append(idx)
        pending = retry
    if pending:
        raise ProtocolAbort(f"no value below p after {MAX_SAMPLE_ATTEMPTS} attempts")
    return out  # type: ignore[return-value]


def bits_value(bits: BitShares, p: int) -> int:
    """Share of ``sum 2^i b_i`` from shares of the bits (local)."""
    return sum(b << i for i, b in enumerate(bits)) % p


def bit_decompose(party: Party, a: list[int]) -> list[BitShares]:
    """Shares of the ``lam`` bits of each shared ``a`` (values in ``[0, p)``).

    Mask with a random ``b < p`` known only in bits, open ``c = a - b``,
    add ``c + b`` in the clear-plus-shared adder, and subtract ``p`` again
    when that sum wrapped past it.  The wrap flag stays shared.
    """
    if not a:
        return []
    f = party.f
    p, lam = f.p, f.lam
    b = bitwise_random(party, len(a))
    c = party.reveal([(ai - bits_value(bi, p)) % p for ai, bi in zip(a, b)], RevealPurpose.MASKED)
    d = bitadd_pub_shared(party, c, b)  # lam + 1 bits, value c + b < 2p
    wrapped = [(1 - lt) % p for lt in bitlt_shared_pub(party, d, p)]
    # d - p == d + (2^(lam+1) - p) mod 2^(lam+1)
    k = (1 << (lam + 1)) - p
    t = [[((k >> i) & 1) * s % p for i in range(lam + 1)] for s in wrapped]
    r = bitadd_shared_shared(party, d, t)
    return [ri[:lam] for ri in r]


@dataclass(frozen=True)
class AggregationConfig:
    thresh: int
    user_count: int
    f: FieldParams

    @property
    def window(self) -> int:
        return 1 << (self.f.lam - 2)

    def check(self) -> None:
        if not self.f.top_bits_set:
            raise ParameterError(f"modulus {self.f.p} lacks the two top bits the MSB test needs")
        if not 0 <= self.thresh < self.window:
            raise ParameterError(f"threshold {self.thresh} outside [0, {self.window})")
        if not 0 <= self.user_count < self.window:
            raise ParameterError(f"{self.user_count} users exceed the window {self.window}")


def threshold_release(party: Party, sums: list[int], cfg: AggregationConfig) -> list[int]:
    """Open each shared sum if it is at least ``cfg.thresh``, else open 0.

    With ``p >= 3 * 2^(lam-2)`` and sums and threshold below ``2^(lam-2)``,
    the top bit of ``sum - thresh`` is 0 exactly when ``sum >= thresh``.
    """
    cfg.check()
    if cfg.f != party.f:
        raise ParameterError("aggregation config is for a different field")
    f = party.f
    p = f.p
    dif = [(s - cfg.thresh) % p for s in sums]
    msb = [bits[f.lam - 1] for bits in bit_decompose(party, dif)]
    gated = party.mul([(1 - m) % p for m in msb], sums)
    return party.reveal(gated, RevealPurpose.OUTPUT)
