"""Pairwise-independent signatures and the prefix/buffer views taken from them.

A signature is the top ``ell`` bits of ``(a*x + b) mod p`` for a Mersenne prime
``p``.  At level ``i`` an element is keyed by the leftmost
``ell_i = eps_bits + i + 2`` bits and carries the next ``r = ceil(log2 w)``
bits as a buffer of trits, padded with ``BOT`` once the signature runs out.

Buffers are stored in dictionaries as a compact *code*: ``k`` real bits
``b1..bk`` followed by ``r - k`` BOT trits become the integer ``(1 << k) | b1..bk``.
That needs ``r + 1`` bits.  The two-bit-per-trit form (``pack_trits``) is kept
for serialization.
"""
from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .errors import LevelOverflowError, ParameterError

MERSENNE_89 = (1 << 89) - 1
MERSENNE_127 = (1 << 127) - 1
# Truncation bias of the top-bits output is at most 2**ell / p.
BIAS_MARGIN_BITS = 16


class Trit(IntEnum):
    ZERO = 0
    ONE = 1
    BOT = 2

    def __str__(self) -> str:
        return "⊥" if self is Trit.BOT else str(int(self))


def eps_bits_for(epsilon: float) -> int:
    """Smallest k with 2**-k <= epsilon, i.e. ceil(log2(1/epsilon))."""
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon!r}")
    k = max(0, math.ceil(-math.log2(epsilon)) - 1)
    while 2.0 ** -k > epsilon:
        k += 1
    return k


def buffer_len_for(w: int) -> int:
    """r = ceil(log2 w)."""
    return max(1, (w - 1).bit_length())


def prime_for(ell: int) -> int:
    if ell + BIAS_MARGIN_BITS <= 89:
        return MERSENNE_89
    if ell + BIAS_MARGIN_BITS <= 127:
        return MERSENNE_127
    raise ParameterError(f"signature length {ell} too long for the supported primes")


def child_seed(seed: int, *tags: int) -> int:
    """Deterministic 64-bit seed derived from ``seed`` and integer tags."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *tags])
    return int(ss.generate_state(1, np.uint64)[0])


class PolyHash:
    """x -> top ``out_bits`` bits of a polynomial in x modulo a Mersenne prime.

    ``coeffs`` is lowest degree first, so degree 1 is ``(b, a)``.
    """

    def __init__(self, coeffs: Sequence[int], p: int, out_bits: int):
        if out_bits < 1 or out_bits > p.bit_length():
            raise ParameterError(f"out_bits={out_bits} out of range for p")
        self.coeffs = tuple(int(c) for c in coeffs)
        self.p = p
        self.out_bits = out_bits
        self.shift = p.bit_length() - out_bits

    @classmethod
    def sample(cls, seed: int, out_bits: int, degree: int = 1, p: int | None = None) -> PolyHash:
        p = prime_for(out_bits) if p is None else p
        rng = random.Random(seed)
        a = rng.randrange(1, p)
        b = rng.randrange(p)
        higher = [rng.randrange(p) for _ in range(degree - 1)]
        return cls((b, a, *higher), p, out_bits)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def residue(self, x: int) -> int:
        acc = 0
        for c in reversed(self.coeffs):
            acc = (acc * x + c) % self.p
        return acc

    def __call__(self, x: int) -> int:
        return self.residue(int(x)) >> self.shift

    def residues(self, xs) -> np.ndarray:
        """Vectorised residues as an object array of Python ints."""
        xo = np.asarray(xs).astype(object)
        c = self.coeffs
        if len(c) == 2:
            return (c[1] * xo + c[0]) % self.p
        acc = np.full(xo.shape, c[-1], dtype=object)
        for coef in reversed(c[:-1]):
            acc = (acc * xo + coef) % self.p
        return acc

    def many(self, xs) -> np.ndarray:
        """Vectorised outputs; uint64 when ``out_bits <= 64``, else object."""
        out = self.residues(xs) >> self.shift
        if self.out_bits <= 64:
            return out.astype(np.uint64)
        return out


@dataclass(frozen=True)
class HashParams:
    """A sampled signature function h plus the lengths derived from it.

    ``higher`` holds the x**2.. coefficients when a constant-degree polynomial
    is used instead of the default degree-1 family.  ``widen`` adds extra
    bits to every level's key (the de-amortized filter uses one).
    """

    a: int
    b: int
    p: int
    ell: int
    r: int
    w: int
    eps_bits: int
    higher: tuple[int, ...] = ()
    _poly: PolyHash = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (1 <= self.a < self.p and 0 <= self.b < self.p):
            raise ParameterError("coefficients must satisfy 1 <= a < p, 0 <= b < p")
        if self.ell < self.eps_bits + self.w + 2:
            raise ParameterError("ell must be at least eps_bits + w + 2")
        if self.ell + BIAS_MARGIN_BITS > self.p.bit_length():
            raise ParameterError("p must be at least 2**(ell + 16)")
        object.__setattr__(self, "_poly", PolyHash((self.b, self.a, *self.higher), self.p, self.ell))

    @property
    def widen(self) -> int:
        return self.ell - (self.eps_bits + self.w + 2)

    @property
    def degree(self) -> int:
        return 1 + len(self.higher)

    def level_bits(self, i: int) -> int:
        """ell_i, the key width at level i."""
        if i < 1:
            raise ParameterError(f"level must be >= 1, got {i}")
        if i > self.w:
            raise LevelOverflowError(f"level {i} exceeds universe width {self.w}")
        return self.eps_bits + i + 2 + self.widen

    def full(self, x: int) -> int:
        return self._poly(x)

    def full_many(self, xs) -> np.ndarray:
        """Full signatures; uint64 when ``ell <= 64``, else an object array."""
        return self._poly.many(xs)

    def prefix(self, x: int, i: int) -> int:
        return self.full(x) >> (self.ell - self.level_bits(i))

    def buffer_code(self, x: int, i: int) -> int:
        return sig_buffer_code(self.full(x), self.ell, self.level_bits(i), self.r)

    def prefix_many(self, xs, i: int, sigs: np.ndarray | None = None) -> np.ndarray:
        li = self.level_bits(i)
        if li > 64:
            raise ParameterError(f"vectorised keys limited to 64 bits, level {i} needs {li}")
        sigs = self.full_many(xs) if sigs is None else sigs
        if sigs.dtype == object:
            return (sigs >> (self.ell - li)).astype(np.uint64)
        return sigs >> np.uint64(self.ell - li)

    def buffer_code_many(self, xs, i: int, sigs: np.ndarray | None = None) -> np.ndarray:
        li = self.level_bits(i)
        sigs = self.full_many(xs) if sigs is None else sigs
        k = min(self.r, self.ell - li)
        if sigs.dtype == object:
            bits = (sigs >> (self.ell - li - k)) & ((1 << k) - 1)
            return (bits | (1 << k)).astype(np.uint64)
        bits = (sigs >> np.uint64(self.ell - li - k)) & np.uint64((1 << k) - 1)
        return bits | np.uint64(1 << k)

    def to_bytes(self) -> bytes:
        """Little-endian a, b (128-bit) then ell, r, w, eps_bits (16-bit).

        Higher-degree coefficients, when present, follow as a 16-bit count and
        128-bit values.
        """
        out = (self.a.to_bytes(16, "little") + self.b.to_bytes(16, "little")
               + struct.pack("<4H", self.ell, self.r, self.w, self.eps_bits))
        if self.higher:
            out += struct.pack("<H", len(self.higher))
            out += b"".join(c.to_bytes(16, "little") for c in self.higher)
        return out

    @classmethod
    def from_bytes(cls, data: bytes) -> HashParams:
        if len(data) < 40:
            raise ParameterError("truncated HashParams record")
        a = int.from_bytes(data[0:16], "little")
        b = int.from_bytes(data[16:32], "little")
        ell, r, w, eps_bits = struct.unpack("<4H", data[32:40])
        higher: tuple[int, ...] = ()
        if len(data) > 40:
            (n,) = struct.unpack("<H", data[40:42])
            higher = tuple(int.from_bytes(data[42 + 16 * j:58 + 16 * j], "little") for j in range(n))
        return cls(a, b, prime_for(ell), ell, r, w, eps_bits, higher)


def derive_params(epsilon: float, w: int, seed: int, degree: int = 1, widen: int = 0) -> HashParams:
    """Sample h for false-positive target ``epsilon`` over a 2**w universe."""
    eps_bits = eps_bits_for(epsilon)
    if not 8 <= w <= 64:
        raise ParameterError(f"universe width must be in [8, 64], got {w}")
    if degree < 1:
        raise ParameterError("polynomial degree must be >= 1")
    ell = eps_bits + w + 2 + widen
    poly = PolyHash.sample(seed, ell, degree=degree)
    return HashParams(poly.coeffs[1], poly.coeffs[0], poly.p, ell, buffer_len_for(w), w,
                      eps_bits, poly.coeffs[2:])


def full_sig(params: HashParams, x: int) -> int:
    if x < 0 or x >> params.w:
        raise ParameterError(f"key {x} is not a {params.w}-bit value")
    return params.full(x)


def prefix_sig(params: HashParams, x: int, i: int) -> int:
    return sig_prefix(full_sig(params, x), params.ell, params.level_bits(i))


def buffer_sig(params: HashParams, x: int, i: int) -> tuple[Trit, ...]:
    code = sig_buffer_code(full_sig(params, x), params.ell, params.level_bits(i), params.r)
    return code_to_trits(code, params.r)


# -- helpers on raw signatures ------------------------------------------------

def sig_prefix(sig: int, ell: int, ell_i: int) -> int:
    return sig >> (ell - ell_i)


def sig_buffer_code(sig: int, ell: int, ell_i: int, r: int) -> int:
    k = min(r, ell - ell_i)
    bits = (sig >> (ell - ell_i - k)) & ((1 << k) - 1)
    return (1 << k) | bits


def code_to_trits(code: int, r: int) -> tuple[Trit, ...]:
    k = code.bit_length() - 1
    if k < 0 or k > r:
        raise ParameterError(f"invalid buffer code {code} for r={r}")
    bits = [Trit((code >> (k - 1 - j)) & 1) for j in range(k)]
    return tuple(bits) + (Trit.BOT,) * (r - k)


def trits_to_code(trits: Iterable[Trit | int]) -> int:
    code = 1
    seen_bot = False
    for t in trits:
        t = Trit(t)
        if t is Trit.BOT:
            seen_bot = True
        elif seen_bot:
            raise ParameterError("a real bit follows BOT in a buffer")
        else:
            code = (code << 1) | int(t)
    return code


def pack_trits(trits: Iterable[Trit | int]) -> int:
    """Two bits per trit (00=0, 01=1, 10=BOT); trit j at bits 2j..2j+1."""
    out = 0
    for j, t in enumerate(trits):
        out |= int(Trit(t)) << (2 * j)
    return out


def unpack_trits(value: int, r: int) -> tuple[Trit, ...]:
    return tuple(Trit((value >> (2 * j)) & 3) for j in range(r))


def to_bits(value: int, width: int) -> str:
    return format(value, f"0{width}b") if width else ""


def trits_str(trits: Iterable[Trit]) -> str:
    return "".join(str(t) for t in trits)
