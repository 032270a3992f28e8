"""Prime-field arithmetic shared by every protocol in the package.

Field elements are plain Python ints in ``[0, p)``; :class:`FieldParams`
carries the modulus and the operations that need it.  Multiplications,
exponentiations and inversions performed through :class:`FieldParams` are
tallied into the active :class:`OpCounts` (see :func:`count_ops`) so the
benchmark harness can report exact operation counts.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
import random
import secrets
from dataclasses import dataclass, field
from typing import Iterator, Protocol


class ParameterError(ValueError):
    """A caller-supplied parameter violates an operation's precondition."""


class FieldError(ParameterError):
    """Bad field parameters or an element outside the field."""


class NotInvertibleError(FieldError):
    pass


class DecodeError(FieldError):
    pass


class Rng(Protocol):
    def randrange(self, start: int, stop: int | None = None) -> int: ...


@dataclass
class OpCounts:
    """Exact tallies of field work.

    ``mults`` counts top-level multiplications, ``exps`` counts
    exponentiations (an inversion is one exponentiation).  ``modmuls``
    counts every modular multiplication, including the squarings and
    multiplies performed inside square-and-multiply.
    """

    mults: int = 0
    exps: int = 0
    modmuls: int = 0

    def merge(self, other: OpCounts) -> None:
        self.mults += other.mults
        self.exps += other.exps
        self.modmuls += other.modmuls


_active_counts: contextvars.ContextVar[OpCounts | None] = contextvars.ContextVar(
    "uvmpc_op_counts", default=None
)


@contextlib.contextmanager
def count_ops() -> Iterator[OpCounts]:
    """Tally field operations performed in the current context."""
    counts = OpCounts()
    token = _active_counts.set(counts)
    try:
        yield counts
    finally:
        _active_counts.reset(token)


# Small primes for trial division before Miller-Rabin.
_SMALL_PRIMES = [q for q in range(3, 1000, 2) if all(q % d for d in range(3, math.isqrt(q) + 1, 2))]


def is_probable_prime(n: int, rounds: int = 64, rng: Rng | None = None) -> bool:
    """Miller-Rabin; error probability at most 4^-rounds."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for q in _SMALL_PRIMES:
        if n == q:
            return True
        if n % q == 0:
            return False
    rng = rng or random.Random(n)
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class FieldParams:
    """A public prime field.

    ``lam`` is the bit length of ``p`` and ``enc_width`` the number of bytes
    used to encode one element.
    """

    p: int
    lam: int = field(init=False)
    enc_width: int = field(init=False)

    def __post_init__(self) -> None:
        if self.p < 3:
            raise FieldError(f"modulus must be an odd prime, got {self.p}")
        object.__setattr__(self, "lam", self.p.bit_length())
        object.__setattr__(self, "enc_width", (self.lam + 7) // 8)

    @property
    def top_bits_set(self) -> bool:
        return self.p >= 3 << (self.lam - 2)

    # -- arithmetic ---------------------------------------------------------

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.p

    def sub(self, a: int, b: int) -> int:
        return (a - b) % self.p

    def neg(self, a: int) -> int:
        return -a % self.p

    def mul(self, a: int, b: int) -> int:
        counts = _active_counts.get()
        if counts is not None:
            counts.mults += 1
            counts.modmuls += 1
        return a * b % self.p

    def pow(self, base: int, exp: int) -> int:
        """``base**exp mod p`` by left-to-right square-and-multiply."""
        if exp < 0:
            raise FieldError("negative exponent")
        p = self.p
        base %= p
        result = 1
        modmuls = 0
        started = False
        for bit in bin(exp)[2:]:
            if started:
                result = result * result % p
                modmuls += 1
            if bit == "1":
                if started:
                    result = result * base % p
                    modmuls += 1
                else:
                    result = base
                    started = True
        counts = _active_counts.get()
        if counts is not None:
            counts.exps += 1
            counts.modmuls += modmuls
        return result % p

    def inv(self, x: int) -> int:
        """Multiplicative inverse via Fermat's little theorem."""
        if x % self.p == 0:
            raise NotInvertibleError("zero has no multiplicative inverse")
        return self.pow(x, self.p - 2)

    def sqrt(self, a: int) -> int | None:
        """A square root of ``a``, or None when ``a`` is a non-residue."""
        p = self.p
        a %= p
        if a == 0:
            return 0
        if pow(a, (p - 1) // 2, p) != 1:
            return None
        if p % 4 == 3:
            return pow(a, (p + 1) // 4, p)
        # Tonelli-Shanks
        q, s = p - 1, 0
        while q % 2 == 0:
            q //= 2
            s += 1
        z = 2
        while pow(z, (p - 1) // 2, p) != p - 1:
            z += 1
        m, c, t, r = s, pow(z, q, p), pow(a, q, p), pow(a, (q + 1) // 2, p)
        while t != 1:
            i, t2 = 0, t
            while t2 != 1:
                t2 = t2 * t2 % p
                i += 1
            b = pow(c, 1 << (m - i - 1), p)
            m, c = i, b * b % p
            t, r = t * c % p, r * b % p
        return r

    # -- randomness ---------------------------------------------------------

    def rand(self, rng: Rng) -> int:
        return rng.randrange(0, self.p)

    def rand_nonzero(self, rng: Rng) -> int:
        return rng.randrange(1, self.p)

    # -- encoding -----------------------------------------------------------

    def encode(self, x: int) -> bytes:
        if not 0 <= x < self.p:
            raise FieldError(f"{x} is not a field element")
        return x.to_bytes(self.enc_width, "big")

    def decode(self, data: bytes) -> int:
        if len(data) != self.enc_width:
            raise DecodeError(f"expected {self.enc_width} bytes, got {len(data)}")
        x = int.from_bytes(data, "big")
        if x >= self.p:
            raise DecodeError(f"value {x} is not below the modulus")
        return x

    def encode_vec(self, xs: list[int]) -> bytes:
        return b"".join(self.encode(x) for x in xs)

    def decode_vec(self, data: bytes, count: int | None = None) -> list[int]:
        w = self.enc_width
        if len(data) % w:
            raise DecodeError("payload is not a whole number of elements")
        if count is not None and len(data) != count * w:
            raise DecodeError(f"expected {count} elements, got {len(data) // w}")
        return [self.decode(data[i : i + w]) for i in range(0, len(data), w)]


def elem_encode(x: int, f: FieldParams) -> bytes:
    return f.encode(x)


def elem_decode(data: bytes, f: FieldParams) -> int:
    return f.decode(data)


def f_pow(base: int, exp: int, f: FieldParams) -> int:
    return f.pow(base, exp)


def f_inv(x: int, f: FieldParams) -> int:
    return f.inv(x)


def f_rand_nonzero(f: FieldParams, rng: Rng) -> int:
    return f.rand_nonzero(rng)


def make_rng(seed: int | str | bytes | None = None) -> random.Random:
    """Seeded PRNG for reproducible runs, system CSPRNG otherwise."""
    if seed is None:
        return secrets.SystemRandom()
    return random.Random(seed)


def gen_field(lam: int, seed: int | str | bytes | None = None) -> FieldParams:
    """Random ``lam``-bit prime whose two top bits are set.

    Candidates are drawn uniformly from ``[3 * 2**(lam-2), 2**lam)``.  Small
    widths are handled by enumerating the interval so the search always
    terminates.
    """
    if lam < 3:
        raise FieldError("field needs at least 3 bits")
    lo, hi = 3 << (lam - 2), 1 << lam
    rng = make_rng(seed)
    if lam <= 16:
        primes = [n for n in range(lo | 1, hi, 2) if is_probable_prime(n)]
        return FieldParams(primes[rng.randrange(0, len(primes))])
    mr_rng = random.Random(rng.getrandbits(64))
    while True:
        n = rng.randrange(lo, hi) | 1
        if is_probable_prime(n, 64, mr_rng):
            return FieldParams(n)
