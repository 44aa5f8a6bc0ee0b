"""Growable filter: one dictionary of prefix signatures that lengthen as the set grows.

Level ``i`` keys each element by the first ``ell_i = eps_bits + i + 2`` bits of
its signature and carries up to ``r`` further bits as a buffer.  Moving to
level ``i+1`` extends every key by one bit: the first buffer bit when there
is one, otherwise both possible bits (the record branches).  The stream is cut
into subsequences; the first ``2**i0 - 1`` inserts share level ``i0`` and level
``i > i0`` receives ``2**(i-1)`` inserts, which keeps at most ``2**(i+2)``
records in the level-``i`` dictionary.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .compact_dict import DictConfig, LevelDict, PROBE_HIST
from .errors import InvariantError, ParameterError, UniverseExhaustedError
from .hashing import HashParams, PolyHash, child_seed, derive_params, eps_bits_for, sig_buffer_code

CAPACITY_SLACK = 2


@dataclass(frozen=True)
class GrowConfig:
    epsilon: float
    w: int = 32
    i0: int = 10
    delta: float = 0.25
    bucketing: bool = False
    c_fail: int = 1
    seed: int = 0
    degree: int = 1

    def __post_init__(self):
        eps_bits_for(self.epsilon)  # validates epsilon
        if not 8 <= self.w <= 64:
            raise ParameterError(f"universe width must be in [8, 64], got {self.w}")
        if not 1 <= self.i0 <= self.w:
            raise ParameterError(f"i0 must be in [1, w], got {self.i0}")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if self.degree < 1:
            raise ParameterError("hash degree must be >= 1")

    @property
    def bucket_bits(self) -> int:
        return math.ceil(self.delta * self.w / 2) if self.bucketing else 0

    @property
    def buckets(self) -> int:
        return 1 << self.bucket_bits


def subsequence_length(level: int, i0: int) -> int:
    """Inserts received by ``level``: 2**i0 - 1 for the first, 2**(level-1) after."""
    return (1 << i0) - 1 if level == i0 else 1 << (level - 1)


def level_of_position(p: int, i0: int) -> int:
    """Level whose subsequence holds stream position ``p`` (1-based)."""
    return max(i0, p.bit_length())


def capacity_bound(level: int) -> int:
    return 1 << (level + 2)


def _code_len(codes: np.ndarray) -> np.ndarray:
    """Real bits in each buffer code, i.e. bit_length - 1."""
    return (np.frexp(codes.astype(np.float64))[1] - 1).astype(np.int64)


def expand_record(key: int, sat: int, extra_bits: int = 0) -> list[tuple[int, int]]:
    """Children of one record when the key grows by a bit.

    The buffer code sits above ``extra_bits`` of satellite data that is
    carried along unchanged.
    """
    code, extra = sat >> extra_bits, sat & ((1 << extra_bits) - 1)
    k = code.bit_length() - 1
    if k == 0:
        return [((key << 1) | b, sat) for b in (0, 1)]
    bit = (code >> (k - 1)) & 1
    rest = (1 << (k - 1)) | (code & ((1 << (k - 1)) - 1))
    return [((key << 1) | bit, (rest << extra_bits) | extra)]


def expand_records(keys: np.ndarray, sats: np.ndarray, extra_bits: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`expand_record` over many records."""
    keys = np.asarray(keys, dtype=np.uint64)
    sats = np.asarray(sats, dtype=np.uint64)
    eb = np.uint64(extra_bits)
    code = sats >> eb
    extra = sats & np.uint64((1 << extra_bits) - 1)
    k = _code_len(code)
    real = k > 0
    km1 = np.maximum(k - 1, 0).astype(np.uint64)
    one = np.uint64(1)
    bit = (code >> km1) & one
    rest = (one << km1) | (code & ((one << km1) - one))
    rk = (keys[real] << one) | bit[real]
    rs = (rest[real] << eb) | extra[real]
    bk = keys[~real] << one
    bs = sats[~real]
    return np.concatenate([rk, bk, bk | one]), np.concatenate([rs, bs, bs])


def zero_extension(prefix_len_bits: int, key: int, width: int) -> int:
    """Keep the first ``prefix_len_bits`` of a ``width``-bit key and zero the rest."""
    if not 0 <= prefix_len_bits <= width:
        raise ParameterError(f"prefix length {prefix_len_bits} outside [0, {width}]")
    s = width - prefix_len_bits
    return (key >> s) << s


class GrowFilter:
    """Filter for a set of unknown final size with one dictionary lookup per query."""

    variant = "grow"
    extra_bits = 0
    widen = 0

    def __init__(self, config: GrowConfig, params: HashParams | None = None):
        self.config = config
        if params is None:
            params = derive_params(self.target_epsilon(config), config.w, child_seed(config.seed, 0),
                                   degree=config.degree, widen=self.widen)
        elif params.widen != self.widen:
            raise ParameterError(f"{self.variant} needs signatures widened by {self.widen}")
        self.params = params
        self.level = config.i0
        self.sub_count = 0
        self.n = 0
        self.transitions = 0
        self.max_fill = 0.0
        self.peak_space = 0
        self.lookups = 0
        self.queries = 0
        self.last_probes = 0
        self.on_transition: list[Callable[[GrowFilter], None]] = []
        self._probe_hist = np.zeros(PROBE_HIST, dtype=np.int64)
        self._rebuilds = 0
        self.dict = self._new_dict(self.level, reserve=1)

    @staticmethod
    def target_epsilon(config: GrowConfig) -> float:
        return config.epsilon

    # -- structure --------------------------------------------------------------

    @property
    def sub_len(self) -> int:
        return subsequence_length(self.level, self.config.i0)

    @property
    def key_bits(self) -> int:
        return self.params.level_bits(self.level)

    @property
    def level_count(self) -> int:
        return 1

    def _new_dict(self, level: int, reserve: int) -> LevelDict:
        cap = capacity_bound(level) + CAPACITY_SLACK
        cfg = DictConfig(self.params.level_bits(level), self.params.r + 1 + self.extra_bits, cap,
                         reserve=max(1, reserve))
        return LevelDict(cfg)

    def live_dicts(self) -> list[LevelDict]:
        return [self.dict]

    def _retire(self, d: LevelDict) -> None:
        self._probe_hist += d.probe_hist
        self._rebuilds += d.failures

    def _check_capacity(self) -> None:
        fill = self.dict.count / capacity_bound(self.level)
        self.max_fill = max(self.max_fill, fill)
        if fill > 1.0:
            raise InvariantError(
                f"level {self.level} dictionary holds {self.dict.count} > 2^{self.level + 2} records")
        self.peak_space = max(self.peak_space, self.space_bits())

    def _check_key(self, x: int) -> int:
        x = int(x)
        if x < 0 or x >> self.params.w:
            raise ParameterError(f"key {x} is not a {self.params.w}-bit value")
        return x

    def _check_keys(self, xs) -> np.ndarray:
        xs = np.asarray(xs)
        if xs.dtype.kind not in "ui":
            raise ParameterError("keys must be integers")
        if len(xs) and (int(xs.min()) < 0 or int(xs.max()) >> self.params.w):
            raise ParameterError(f"keys must be {self.params.w}-bit values")
        return xs.astype(np.uint64)

    # -- record views -------------------------------------------------------------

    def mode1_record(self, x: int) -> tuple[int, int]:
        """(key, buffer code) stored for ``x`` at the current level."""
        p = self.params
        sig = p.full(x)
        li = p.level_bits(self.level)
        return sig >> (p.ell - li), sig_buffer_code(sig, p.ell, li, p.r)

    def records(self) -> tuple[np.ndarray, np.ndarray]:
        """(keys, buffer codes) of the live dictionary."""
        keys, sats = self.dict.records()
        return keys, sats >> np.uint64(self.extra_bits)

    def record_set(self) -> set[tuple[int, int]]:
        keys, codes = self.records()
        return set(zip(keys.tolist(), codes.tolist()))

    def record_count(self) -> int:
        return sum(d.count for d in self.live_dicts())

    # -- insertion ----------------------------------------------------------------

    def _transition(self) -> None:
        if self.level + 1 > self.params.w:
            raise UniverseExhaustedError(f"universe of 2^{self.params.w} keys exhausted")
        keys, sats = self.dict.records()
        nk, ns = expand_records(keys, sats, self.extra_bits)
        new = self._new_dict(self.level + 1, reserve=len(nk) + 1)
        new.insert_many(nk, ns)
        self.peak_space = max(self.peak_space, self.dict.space_bits() + new.space_bits())
        self._retire(self.dict)
        self.dict = new
        self.level += 1
        self.sub_count = 0
        self.transitions += 1
        self._check_capacity()
        for cb in self.on_transition:
            cb(self)

    def insert(self, x: int) -> None:
        x = self._check_key(x)
        if self.sub_count == self.sub_len:
            self._transition()
        key, code = self.mode1_record(x)
        self.dict.insert(key, code << self.extra_bits)
        self.sub_count += 1
        self.n += 1
        self._check_capacity()

    def insert_many(self, xs) -> None:
        """Insert a batch; same end state as inserting one at a time."""
        xs = self._check_keys(xs)
        at = 0
        while at < len(xs):
            if self.sub_count == self.sub_len:
                self._transition()
            take = min(self.sub_len - self.sub_count, len(xs) - at)
            chunk = xs[at:at + take]
            sigs = self.params.full_many(chunk)
            keys = self.params.prefix_many(chunk, self.level, sigs)
            codes = self.params.buffer_code_many(chunk, self.level, sigs)
            self.dict.insert_many(keys, codes << np.uint64(self.extra_bits))
            self.sub_count += take
            self.n += take
            at += take
            self._check_capacity()

    # -- queries --------------------------------------------------------------------

    def member(self, x: int) -> bool:
        x = self._check_key(x)
        self.queries += 1
        self.lookups += 1
        self.last_probes = 1
        return self.dict.contains(self.params.prefix(x, self.level))

    def member_many(self, xs) -> np.ndarray:
        xs = self._check_keys(xs)
        self.queries += len(xs)
        self.lookups += len(xs)
        self.last_probes = 1
        return self.dict.contains_many(self.params.prefix_many(xs, self.level))

    def __contains__(self, x: int) -> bool:
        return self.member(x)

    # -- accounting -----------------------------------------------------------------

    def space_bits(self) -> int:
        return sum(d.space_bits() for d in self.live_dicts())

    @property
    def rebuilds(self) -> int:
        return self._rebuilds + sum(d.failures for d in self.live_dicts())

    def probe_hist(self) -> np.ndarray:
        h = self._probe_hist.copy()
        for d in self.live_dicts():
            h += d.probe_hist
        return h

    def probe_stats(self) -> tuple[float, float]:
        return hist_stats(self.probe_hist())

    # -- snapshot -------------------------------------------------------------------

    _STATE = struct.Struct("<dHHdBqHIIQ")

    def to_bytes(self) -> bytes:
        """HashParams, configuration and live dictionary, length-prefixed."""
        if self.live_dicts() != [self.dict]:
            raise ParameterError("snapshot only supported between migrations")
        c = self.config
        hp = self.params.to_bytes()
        state = self._STATE.pack(c.epsilon, c.w, c.i0, c.delta, c.bucketing, c.seed, c.degree,
                                 self.level, self.sub_count, self.n)
        d = self.dict.to_bytes()
        return b"".join(struct.pack("<I", len(part)) + part for part in (hp, state, d))

    @classmethod
    def from_bytes(cls, data: bytes) -> GrowFilter:
        parts, at = [], 0
        for _ in range(3):
            (size,) = struct.unpack_from("<I", data, at)
            parts.append(data[at + 4:at + 4 + size])
            at += 4 + size
        params = HashParams.from_bytes(parts[0])
        eps, w, i0, delta, bucketing, seed, degree, level, sub_count, n = cls._STATE.unpack(parts[1])
        g = cls(GrowConfig(eps, w, i0, delta, bool(bucketing), seed=seed, degree=degree), params=params)
        g.level, g.sub_count, g.n = level, sub_count, n
        g.dict = LevelDict.from_bytes(parts[2])
        return g


def hist_stats(hist: np.ndarray) -> tuple[float, float]:
    """(mean, p99) of a probe-count histogram."""
    total = int(hist.sum())
    if total == 0:
        return 0.0, 0.0
    mean = float((np.arange(len(hist)) * hist).sum() / total)
    p99 = float(np.searchsorted(np.cumsum(hist), 0.99 * total))
    return mean, p99


class BucketedGrowFilter:
    """Keys split across 2**ceil(delta*w/2) independent growable filters.

    Buckets share the signature function; a separate hash routes keys.  The
    reported space models word-wise interleaving of the buckets: bucket count
    times the largest bucket seen so far.
    """

    variant = "grow-bucketed"

    def __init__(self, config: GrowConfig, bucket_factory=GrowFilter):
        if not config.bucketing:
            config = GrowConfig(config.epsilon, config.w, config.i0, config.delta, True,
                                config.c_fail, config.seed, config.degree)
        self.config = config
        self.params = derive_params(config.epsilon, config.w, child_seed(config.seed, 0), degree=config.degree)
        self.router = PolyHash.sample(child_seed(config.seed, 0xB0C), config.bucket_bits)
        self.buckets = [bucket_factory(config, params=self.params) for _ in range(config.buckets)]
        self.max_bucket_space = max(b.space_bits() for b in self.buckets)
        self.n = 0
        self.last_probes = 0
        self.lookups = 0
        self.queries = 0

    def bucket_of(self, x: int) -> int:
        return self.router(int(x))

    def _track(self) -> None:
        self.max_bucket_space = max(self.max_bucket_space, max(b.space_bits() for b in self.buckets))

    def insert(self, x: int) -> None:
        self.buckets[self.bucket_of(x)].insert(x)
        self.n += 1
        self._track()

    def insert_many(self, xs) -> None:
        xs = np.asarray(xs, dtype=np.uint64)
        route = self.router.many(xs)
        for j in np.unique(route).tolist():
            self.buckets[j].insert_many(xs[route == j])
        self.n += len(xs)
        self._track()

    def member(self, x: int) -> bool:
        self.queries += 1
        self.lookups += 1
        self.last_probes = 1
        return self.buckets[self.bucket_of(x)].member(x)

    def member_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        route = self.router.many(xs)
        out = np.zeros(len(xs), dtype=bool)
        for j in np.unique(route).tolist():
            sel = route == j
            out[sel] = self.buckets[j].member_many(xs[sel])
        self.queries += len(xs)
        self.lookups += len(xs)
        self.last_probes = 1
        return out

    def __contains__(self, x: int) -> bool:
        return self.member(x)

    @property
    def level(self) -> int:
        return max(b.level for b in self.buckets)

    @property
    def level_count(self) -> int:
        return 1

    @property
    def max_fill(self) -> float:
        return max(b.max_fill for b in self.buckets)

    @property
    def rebuilds(self) -> int:
        return sum(b.rebuilds for b in self.buckets)

    def bucket_loads(self) -> np.ndarray:
        return np.array([b.n for b in self.buckets])

    def space_bits(self) -> int:
        """Interleaved space: buckets x running maximum bucket space."""
        return len(self.buckets) * self.max_bucket_space

    def actual_space_bits(self) -> int:
        return sum(b.space_bits() for b in self.buckets)

    def record_count(self) -> int:
        return sum(b.record_count() for b in self.buckets)

    def live_dicts(self) -> list[LevelDict]:
        return [d for b in self.buckets for d in b.live_dicts()]

    def probe_stats(self) -> tuple[float, float]:
        return hist_stats(sum(b.probe_hist() for b in self.buckets))
