"""Fixed-capacity approximate membership filters: a Bloom filter and a signature set.

Both know their capacity and target rate up front.  They are the per-level
building blocks of :class:`amqgrow.chain.ChainFilter` and double as baselines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compact_dict import DictConfig, LevelDict
from .errors import CapacityError, ParameterError
from .hashing import PolyHash, child_seed

BACKENDS = ("sigset", "bloom")
AMQ_HEADER_BITS = 128


@dataclass(frozen=True)
class AmqConfig:
    capacity: int
    epsilon: float
    backend: str = "sigset"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ParameterError(f"epsilon must lie in (0, 1), got {self.epsilon!r}")
        if self.capacity < 1:
            raise ParameterError("capacity must be >= 1")
        if self.backend not in BACKENDS:
            raise ParameterError(f"unknown backend {self.backend!r}; choose from {BACKENDS}")


@dataclass(frozen=True)
class BloomLayout:
    m: int
    k: int

    @classmethod
    def for_config(cls, capacity: int, epsilon: float) -> BloomLayout:
        lg = math.log2(1.0 / epsilon)
        return cls(m=math.ceil(capacity * math.log2(math.e) * lg), k=math.ceil(lg))


def fingerprint_bits(capacity: int, epsilon: float) -> int:
    """ceil(log2(capacity / epsilon)): a union bound over ``capacity`` stored prints gives rate <= epsilon."""
    bits = math.ceil(math.log2(capacity / epsilon))
    # guard against float rounding right at a power of two
    while capacity * 2.0 ** -bits > epsilon:
        bits += 1
    return max(1, bits)


class _Fixed:
    def __init__(self, config: AmqConfig):
        self.config = config
        self.inserted = 0

    @property
    def capacity(self) -> int:
        return self.config.capacity

    def _charge(self, k: int = 1) -> None:
        if self.inserted + k > self.config.capacity:
            raise CapacityError(f"more than {self.config.capacity} inserts into a fixed filter")
        self.inserted += k

    def __contains__(self, x: int) -> bool:
        return self.member(x)


class Bloom(_Fixed):
    """Classic Bloom filter with double hashing g_j = h1 + j*h2 mod m."""

    def __init__(self, config: AmqConfig):
        super().__init__(config)
        self.layout = BloomLayout.for_config(config.capacity, config.epsilon)
        self.h1 = PolyHash.sample(child_seed(config.seed, 1), 32)
        self.h2 = PolyHash.sample(child_seed(config.seed, 2), 32)
        self.bits = np.zeros(self.layout.m, dtype=bool)

    def positions(self, x: int) -> list[int]:
        m, k = self.layout.m, self.layout.k
        a, b = self.h1(x), self.h2(x) | 1
        return [(a + j * b) % m for j in range(k)]

    def _positions_many(self, xs) -> np.ndarray:
        m, k = self.layout.m, self.layout.k
        a = self.h1.many(xs).astype(np.int64)
        b = (self.h2.many(xs) | np.uint64(1)).astype(np.int64)
        j = np.arange(k, dtype=np.int64)
        return (a[:, None] + (j[None, :] * (b[:, None] % m))) % m

    def insert(self, x: int) -> int:
        """Set the k bits of ``x``; returns how many were newly set."""
        self._charge()
        pos = self.positions(x)
        new = int(np.count_nonzero(~self.bits[pos]))
        self.bits[pos] = True
        return new

    def insert_many(self, xs) -> None:
        xs = np.asarray(xs, dtype=np.uint64)
        self._charge(len(xs))
        self.bits[self._positions_many(xs).ravel()] = True

    def member(self, x: int) -> bool:
        return bool(self.bits[self.positions(x)].all())

    def member_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        if len(xs) == 0:
            return np.zeros(0, dtype=bool)
        return self.bits[self._positions_many(xs)].all(axis=1)

    def space_bits(self) -> int:
        return AMQ_HEADER_BITS + self.layout.m

    def record_count(self) -> int:
        return int(np.count_nonzero(self.bits))


class SigSet(_Fixed):
    """Set of ceil(log2(n/eps))-bit fingerprints held in a compact dictionary."""

    def __init__(self, config: AmqConfig):
        super().__init__(config)
        self.width = fingerprint_bits(config.capacity, config.epsilon)
        if self.width > 64:
            raise ParameterError(f"fingerprint width {self.width} exceeds 64 bits")
        self.hash = PolyHash.sample(child_seed(config.seed, 0), self.width)
        self.dict = LevelDict(DictConfig(self.width, 0, config.capacity, reserve=config.capacity))

    def fingerprint(self, x: int) -> int:
        return self.hash(x)

    def insert(self, x: int) -> bool:
        """Store the fingerprint of ``x``; False when it was already present."""
        self._charge()
        return self.dict.insert(self.hash(x))

    def insert_many(self, xs) -> None:
        xs = np.asarray(xs, dtype=np.uint64)
        self._charge(len(xs))
        self.dict.insert_many(self.hash.many(xs))

    def member(self, x: int) -> bool:
        return self.dict.contains(self.hash(x))

    def member_many(self, xs) -> np.ndarray:
        return self.dict.contains_many(self.hash.many(np.asarray(xs, dtype=np.uint64)))

    def space_bits(self) -> int:
        return self.dict.space_bits()

    def record_count(self) -> int:
        return self.dict.count


def amq_new(config: AmqConfig) -> Bloom | SigSet:
    return Bloom(config) if config.backend == "bloom" else SigSet(config)
