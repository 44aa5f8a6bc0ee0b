"""Compact multimap from fixed-width integer keys to small satellite values.

Layout
------
A key of ``key_bits`` bits is split into a quotient (its top ``q`` bits) and a
remainder.  The quotient selects a *home* slot among ``B`` canonical slots via
``home = (quotient * B) >> q`` with ``q = floor(log2 B)``, which is injective
and order-preserving for any ``B``, so only the remainder is stored.

Records sit in home order: all records of one home form a contiguous *run*
and a run starts at ``max(home, end of previous run + 1)``.  ``B`` canonical
slots are followed by a small overflow tail instead of wrapping around.
Per slot we keep the remainder, the satellite, a ``runend`` bit and a
``used`` bit; per canonical slot an ``occupied`` bit; per 64-slot block an
8-bit offset giving how far runs of earlier homes spill into the block.  With the offsets a
lookup jumps straight to its run (a rank over ``occupied`` and a select over
``runend`` inside one block), so a query costs one metadata probe plus the
length of its run.

Within a run records are sorted by (remainder, satellite), so the slot arrays
are a function of the stored set and the slot count alone: bulk loads and
one-at-a-time inserts produce identical layouts.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .errors import AllocationError, CapacityError, ParameterError, StaleCursorError

BLOCK = 64
OFFSET_BITS = 8
HEADER_WORDS = 10
HEADER_BITS = 32 * HEADER_WORDS
MIN_SLOTS = 8
PROBE_HIST = 256


class DictRecord(NamedTuple):
    key: int
    sat: int


@dataclass(frozen=True)
class DictConfig:
    key_bits: int
    sat_bits: int
    capacity: int
    load_limit: float = 0.85
    reserve: int | None = None
    growth: float = 1.5
    max_bits: int = 1 << 36

    def __post_init__(self):
        if not 1 <= self.key_bits <= 64:
            raise ParameterError(f"key_bits must be in [1, 64], got {self.key_bits}")
        if not 0 <= self.sat_bits <= 64:
            raise ParameterError(f"sat_bits must be in [0, 64], got {self.sat_bits}")
        if self.capacity <= 0:
            raise ParameterError("capacity must be positive")
        if not 0.0 < self.load_limit < 1.0:
            raise ParameterError("load_limit must lie in (0, 1)")
        if self.growth <= 1.0:
            raise ParameterError("growth must exceed 1")
        if self.initial_records * (self.key_bits + self.sat_bits) > self.max_bits:
            raise AllocationError(
                f"{self.initial_records} records x {self.key_bits + self.sat_bits} bits exceeds cap {self.max_bits}")

    @property
    def initial_records(self) -> int:
        r = self.capacity if self.reserve is None else self.reserve
        return max(1, min(r, self.capacity))


def _overflow_slots(b: int) -> int:
    return min(BLOCK, max(MIN_SLOTS, b // 8))


def _concat_ranges(starts: np.ndarray, lens: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positions covered by [starts[j], starts[j]+lens[j]) and the run index of each."""
    total = int(lens.sum())
    run = np.repeat(np.arange(len(lens)), lens)
    first = np.cumsum(lens) - lens
    pos = starts[run] + (np.arange(total) - first[run])
    return pos.astype(np.int64), run


def layout_positions(homes: np.ndarray, lo: int = 0) -> np.ndarray:
    """Slot of each record when records (sorted by home) are packed from ``lo``."""
    if len(homes) == 0:
        return np.zeros(0, dtype=np.int64)
    j = np.arange(len(homes), dtype=np.int64)
    return j + np.maximum.accumulate(np.maximum(homes.astype(np.int64) - j, lo))


class LevelDict:
    """Dynamic multimap with quotiented keys and exact space accounting."""

    def __init__(self, config: DictConfig, slots: int | None = None):
        self.config = config
        if slots is None:
            slots = math.ceil(config.initial_records / config.load_limit)
        self.count = 0
        self.version = 0
        self.resizes = 0
        self.failures = 0
        self.lookups = 0
        self.probe_hist = np.zeros(PROBE_HIST, dtype=np.int64)
        self._cache = None
        self._pair_cache = None
        self._alloc(max(MIN_SLOTS, slots))

    # -- allocation -----------------------------------------------------------

    def _alloc(self, b: int, tail: int | None = None, off_bits: int = OFFSET_BITS) -> None:
        cfg = self.config
        self._B = b
        self._P = b + (_overflow_slots(b) if tail is None else tail)
        self._off_bits = off_bits
        self._q = min(b.bit_length() - 1, cfg.key_bits)
        self._rbits = cfg.key_bits - self._q
        if self._P * (self._rbits + cfg.sat_bits + 2) > cfg.max_bits:
            raise AllocationError(f"{self._P} slots exceed the memory cap")
        self._rem = np.zeros(self._P, dtype=np.uint64)
        self._sat = np.zeros(self._P, dtype=np.uint64)
        self._re = np.zeros(self._P, dtype=bool)
        self._used = np.zeros(self._P, dtype=bool)
        self._occ = np.zeros(self._B, dtype=bool)
        self._off = np.zeros(-(-self._P // BLOCK), dtype=np.int64)
        self._cache = None

    @property
    def slots(self) -> int:
        """Canonical (home) slot count."""
        return self._B

    @property
    def physical_slots(self) -> int:
        return self._P

    @property
    def remainder_bits(self) -> int:
        return self._rbits

    def __len__(self) -> int:
        return self.count

    def space_bits(self) -> int:
        """Bits of the packed layout: header, slot array, occupied bits, offsets."""
        per_slot = self._rbits + self.config.sat_bits + 2
        return HEADER_BITS + self._P * per_slot + self._B + len(self._off) * self._off_bits

    # -- key arithmetic -------------------------------------------------------

    def _split(self, key: int) -> tuple[int, int]:
        key = int(key)
        if key < 0 or key >> self.config.key_bits:
            raise ParameterError(f"key {key} wider than {self.config.key_bits} bits")
        top = key >> self._rbits
        return (top * self._B) >> self._q, key & ((1 << self._rbits) - 1)

    def _split_many(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        keys = np.asarray(keys, dtype=np.uint64)
        rb = np.uint64(self._rbits)
        top = keys >> rb if self._rbits < 64 else np.zeros_like(keys)
        homes = ((top * np.uint64(self._B)) >> np.uint64(self._q)).astype(np.int64)
        mask = np.uint64((1 << self._rbits) - 1) if self._rbits < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)
        return homes, keys & mask

    def _join_many(self, homes: np.ndarray, rems: np.ndarray) -> np.ndarray:
        h = homes.astype(np.uint64)
        top = ((h << np.uint64(self._q)) + np.uint64(self._B - 1)) // np.uint64(self._B)
        if self._rbits >= 64:
            return rems.astype(np.uint64)
        return (top << np.uint64(self._rbits)) | rems.astype(np.uint64)

    def _join(self, home: int, rem: int) -> int:
        top = ((home << self._q) + self._B - 1) // self._B
        return (top << self._rbits) | rem

    # -- run location ---------------------------------------------------------

    def _select_runends(self, base: int, k: int) -> np.ndarray:
        """Positions of the first ``k`` runend bits at or after ``base``."""
        width = 2 * BLOCK
        while True:
            hits = np.flatnonzero(self._re[base:base + width])
            if len(hits) >= k or base + width >= self._P:
                return hits[:k] + base
            width *= 2

    def _find_run(self, h: int) -> tuple[int, int]:
        """(start, end) slots of the run of occupied home ``h``."""
        b = h // BLOCK
        h0 = b * BLOCK
        k = int(np.count_nonzero(self._occ[h0:h + 1]))
        base = h0 + int(self._off[b])
        ends = self._select_runends(base, k)
        end = int(ends[k - 1])
        start = max(h, base if k == 1 else int(ends[k - 2]) + 1)
        return start, end

    def _new_run_slot(self, h: int) -> int:
        """Slot where a run for unoccupied home ``h`` would begin."""
        b = h // BLOCK
        h0 = b * BLOCK
        k = int(np.count_nonzero(self._occ[h0:h]))
        base = h0 + int(self._off[b])
        if k == 0:
            return max(h, base)
        return max(h, int(self._select_runends(base, k)[k - 1]) + 1)

    # -- lookups --------------------------------------------------------------

    def _record_probe(self, probes: int) -> None:
        self.lookups += 1
        self.probe_hist[min(probes, PROBE_HIST - 1)] += 1

    def lookup(self, key: int) -> list[int]:
        """Satellites stored under ``key``, ascending."""
        h, rem = self._split(key)
        if not self._occ[h]:
            self._record_probe(1)
            return []
        s, e = self._find_run(h)
        self._record_probe(1 + e - s + 1)
        hits = np.flatnonzero(self._rem[s:e + 1] == np.uint64(rem))
        return [int(self._sat[s + j]) for j in hits]

    def contains(self, key: int) -> bool:
        return bool(self.lookup(key))

    def __contains__(self, key: int) -> bool:
        return self.contains(key)

    def _locate(self, key: int, sat: int) -> int:
        """Slot of the exact record (key, sat), or -1.  Does not count probes."""
        h, rem = self._split(key)
        if not self._occ[h]:
            return -1
        s, e = self._find_run(h)
        hits = np.flatnonzero((self._rem[s:e + 1] == np.uint64(rem)) & (self._sat[s:e + 1] == np.uint64(sat)))
        return s + int(hits[0]) if len(hits) else -1

    def has_record(self, key: int, sat: int) -> bool:
        return self._locate(key, sat) >= 0

    # -- decoding -------------------------------------------------------------

    def _decode(self, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
        """Homes and slots of all records in [lo, hi); both ends must be clean cuts."""
        occ_q = np.flatnonzero(self._occ[lo:min(hi, self._B)]) + lo
        ends = np.flatnonzero(self._re[lo:hi]) + lo
        if len(occ_q) != len(ends):
            raise AssertionError("occupied/runend mismatch in window")
        if len(ends) == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        prev = np.empty_like(ends)
        prev[0] = lo
        prev[1:] = ends[:-1] + 1
        starts = np.maximum(occ_q, prev)
        pos, run = _concat_ranges(starts, ends - starts + 1)
        return occ_q[run].astype(np.int64), pos

    def _decoded(self):
        """Cached full decode: homes, slots, keys, sort order of keys."""
        if self._cache is not None and self._cache[0] == self.version:
            return self._cache[1]
        homes, pos = self._decode(0, self._P)
        keys = self._join_many(homes, self._rem[pos])
        order = np.argsort(keys, kind="stable")
        runlen = np.bincount(homes, minlength=self._B) if len(homes) else np.zeros(self._B, dtype=np.int64)
        data = (homes, pos, keys, order, keys[order], runlen)
        self._cache = (self.version, data)
        return data

    def records(self) -> tuple[np.ndarray, np.ndarray]:
        """All (keys, sats) in slot order, which is ascending (key, sat)."""
        _, pos, keys, _, _, _ = self._decoded()
        return keys.copy(), self._sat[pos].copy()

    def __iter__(self) -> Iterator[DictRecord]:
        keys, sats = self.records()
        for k, s in zip(keys.tolist(), sats.tolist()):
            yield DictRecord(k, s)

    def enumerate(self) -> list[DictRecord]:
        return list(self)

    # -- vectorised queries ---------------------------------------------------

    def contains_many(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.uint64)
        if len(keys) == 0:
            return np.zeros(0, dtype=bool)
        homes, _ = self._split_many(keys)
        _, _, _, _, skeys, runlen = self._decoded()
        probes = 1 + runlen[homes]
        self.lookups += len(keys)
        self.probe_hist += np.bincount(np.minimum(probes, PROBE_HIST - 1), minlength=PROBE_HIST)
        if len(skeys) == 0:
            return np.zeros(len(keys), dtype=bool)
        idx = np.searchsorted(skeys, keys)
        return skeys[np.minimum(idx, len(skeys) - 1)] == keys

    def lookup_pairs(self, keys) -> tuple[np.ndarray, np.ndarray]:
        """For a batch of keys, (query index, satellite) for every matching record."""
        keys = np.asarray(keys, dtype=np.uint64)
        homes, _ = self._split_many(keys)
        _, pos, _, order, skeys, runlen = self._decoded()
        probes = 1 + runlen[homes]
        self.lookups += len(keys)
        self.probe_hist += np.bincount(np.minimum(probes, PROBE_HIST - 1), minlength=PROBE_HIST)
        left = np.searchsorted(skeys, keys, "left")
        right = np.searchsorted(skeys, keys, "right")
        qidx, run = _concat_ranges(left, right - left)
        src = np.repeat(np.arange(len(keys)), right - left)
        sats = self._sat[pos[order[qidx]]] if len(qidx) else np.zeros(0, dtype=np.uint64)
        return src, sats

    def probe_stats(self) -> tuple[float, float]:
        """(mean, p99) slot probes per lookup since creation."""
        total = self.probe_hist.sum()
        if total == 0:
            return 0.0, 0.0
        values = np.arange(PROBE_HIST)
        mean = float((values * self.probe_hist).sum() / total)
        cdf = np.cumsum(self.probe_hist)
        p99 = float(np.searchsorted(cdf, 0.99 * total))
        return mean, p99

    # -- mutation helpers -----------------------------------------------------

    def _first_free(self, at: int) -> int:
        """First unused slot at or after ``at``, or -1."""
        width = 2 * BLOCK
        while True:
            free = np.flatnonzero(~self._used[at:at + width])
            if len(free):
                return at + int(free[0])
            if at + width >= self._P:
                return -1
            width *= 2

    def _offsets_for(self, homes: np.ndarray, pos: np.ndarray, blocks: np.ndarray) -> np.ndarray:
        h0 = blocks * BLOCK
        if len(homes) == 0:
            return np.zeros(len(blocks), dtype=np.int64)
        j = np.searchsorted(homes, h0, "left") - 1
        last = np.where(j >= 0, pos[np.maximum(j, 0)], -1)
        return np.maximum(0, last + 1 - h0)

    def _write_window(self, lo: int, hi: int, homes, pos, rems, sats) -> bool:
        """Rewrite slots [lo, hi).  Returns False (nothing written) if the layout does not fit."""
        if len(pos) and pos[-1] >= hi:
            return False
        b_lo = lo // BLOCK + 1
        b_hi = -(-hi // BLOCK)
        blocks = np.arange(b_lo, b_hi)
        offs = self._offsets_for(homes, pos, blocks)
        if len(offs) and offs.max() >> self._off_bits:
            return False
        self._rem[lo:hi] = 0
        self._sat[lo:hi] = 0
        self._re[lo:hi] = False
        self._used[lo:hi] = False
        self._used[pos] = True
        self._rem[pos] = rems
        self._sat[pos] = sats
        if len(homes):
            last_of_run = np.ones(len(homes), dtype=bool)
            last_of_run[:-1] = homes[1:] != homes[:-1]
            self._re[pos[last_of_run]] = True
        self._occ[lo:min(hi, self._B)] = False
        self._occ[homes] = True
        self._off[b_lo:b_hi] = offs
        return True

    def _grow_target(self, records: int) -> int:
        b = self._B
        while records > self.config.load_limit * b:
            b = math.ceil(b * self.config.growth)
        return b

    def _rebuild(self, b: int, keys: np.ndarray, sats: np.ndarray) -> None:
        """Lay out distinct (keys, sats) pairs into ``b`` canonical slots.

        The overflow tail and the offset width normally take their default
        sizes; skewed key sets whose runs do not fit get a longer tail or wider
        offsets rather than an ever larger table.
        """
        order = np.lexsort((sats, keys))
        keys, sats = keys[order], sats[order]
        self._alloc(b)
        homes, rems = self._split_many(keys)
        pos = layout_positions(homes)
        tail, off_bits = self._P - b, OFFSET_BITS
        if len(pos) and pos[-1] >= self._P:
            tail = int(pos[-1]) + 1 - b + _overflow_slots(b)
        nblocks = -(-(b + tail) // BLOCK)
        offs = self._offsets_for(homes, pos, np.arange(1, nblocks))
        if len(offs):
            off_bits = max(OFFSET_BITS, int(offs.max()).bit_length())
        if tail != self._P - b or off_bits != OFFSET_BITS:
            self.failures += 1
            self._alloc(b, tail, off_bits)
        if not self._write_window(0, self._P, homes, pos, rems, sats):
            raise AssertionError("layout does not fit its own allocation")
        self.count = len(keys)
        self.version += 1

    def resize(self, b: int) -> None:
        keys, sats = self.records()
        self.resizes += 1
        self._rebuild(max(MIN_SLOTS, b), keys, sats)

    # -- mutation -------------------------------------------------------------

    def insert(self, key: int, sat: int = 0) -> bool:
        """Store (key, sat).  Returns False when the exact pair is already present."""
        h, rem = self._split(key)
        sat = int(sat)
        if sat < 0 or sat >> self.config.sat_bits:
            raise ParameterError(f"satellite {sat} wider than {self.config.sat_bits} bits")
        occupied = bool(self._occ[h])
        if occupied:
            s, e = self._find_run(h)
            dup = (self._rem[s:e + 1] == np.uint64(rem)) & (self._sat[s:e + 1] == np.uint64(sat))
            if dup.any():
                return False
        if self.count + 1 > self.config.capacity:
            raise CapacityError(f"dictionary capacity {self.config.capacity} exceeded")
        if self.count + 1 > self.config.load_limit * self._B:
            self.resize(self._grow_target(self.count + 1))
            return self.insert(key, sat)
        if occupied:
            rk, rs = self._rem[s:e + 1], self._sat[s:e + 1]
            r64, s64 = np.uint64(rem), np.uint64(sat)
            at = s + int(np.count_nonzero((rk < r64) | ((rk == r64) & (rs < s64))))
        else:
            at = self._new_run_slot(h)
        f = self._first_free(at)
        b_lo, b_hi = h // BLOCK + 1, f // BLOCK + 1
        if f < 0 or (b_hi > b_lo and self._off[b_lo:b_hi].max() + 1 >> self._off_bits):
            keys, sats = self.records()
            self.resizes += 1
            self._rebuild(self._B, np.append(keys, np.uint64(key)), np.append(sats, np.uint64(sat)))
            return True
        for arr in (self._rem, self._sat, self._re, self._used):
            arr[at + 1:f + 1] = arr[at:f]
        self._rem[at] = rem
        self._sat[at] = sat
        self._used[at] = True
        if not occupied:
            self._re[at] = True
            self._occ[h] = True
        elif at == e + 1:
            self._re[e] = False
            self._re[at] = True
        else:
            self._re[at] = False
        self._off[b_lo:b_hi] += 1
        self.count += 1
        self.version += 1
        return True

    def remove(self, key: int, sat: int = 0) -> bool:
        """Delete the exact pair (key, sat).  Returns whether it was present."""
        h, rem = self._split(key)
        if not self._occ[h]:
            return False
        s, e = self._find_run(h)
        hit = np.flatnonzero((self._rem[s:e + 1] == np.uint64(rem)) & (self._sat[s:e + 1] == np.uint64(int(sat))))
        if len(hit) == 0:
            return False
        d = s + int(hit[0])
        g = self._shift_stop(h, e)
        for arr in (self._rem, self._sat, self._re, self._used):
            arr[d:g - 1] = arr[d + 1:g]
        self._rem[g - 1] = 0
        self._sat[g - 1] = 0
        self._re[g - 1] = False
        self._used[g - 1] = False
        if s == e:
            self._occ[h] = False
        elif d == e:
            self._re[e - 1] = True
        b_lo, b_hi = h // BLOCK + 1, (g - 1) // BLOCK + 1
        self._off[b_lo:b_hi] -= 1
        self.count -= 1
        self.version += 1
        return True

    def _shift_stop(self, h: int, e: int) -> int:
        """End (exclusive) of the records that slide left when one record of home ``h`` goes.

        Later runs slide until an empty slot or a run already sitting at its home.
        """
        c = self._first_free(e + 1)
        if c < 0:
            c = self._P
        if c == e + 1:
            return c
        homes = np.flatnonzero(self._occ[h + 1:min(c, self._B)]) + h + 1
        ends = np.flatnonzero(self._re[e + 1:c]) + e + 1
        starts = np.empty_like(ends)
        starts[0] = e + 1
        starts[1:] = ends[:-1] + 1
        pinned = np.flatnonzero(starts == homes)
        return int(starts[pinned[0]]) if len(pinned) else c

    def replace_sat(self, key: int, old: int, new: int) -> bool:
        """Change the satellite of record (key, old).

        If (key, new) already exists the old record is simply removed, keeping
        pairs unique.  Returns whether (key, old) was present.
        """
        if int(new) >> self.config.sat_bits:
            raise ParameterError(f"satellite {new} wider than {self.config.sat_bits} bits")
        if not self.remove(key, old):
            return False
        self.insert(key, new)
        return True

    def insert_many(self, keys, sats=None) -> int:
        """Insert records; returns how many were new.

        Equivalent to calling :meth:`insert` on each pair in turn.
        """
        keys = np.asarray(keys, dtype=np.uint64)
        sats = np.zeros(len(keys), dtype=np.uint64) if sats is None else np.asarray(sats, dtype=np.uint64)
        if len(keys) == 0:
            return 0
        if len(keys) * 32 < self.count:
            return sum(self.insert(k, s) for k, s in zip(keys.tolist(), sats.tolist()))
        if int(keys.max()) >> self.config.key_bits:
            raise ParameterError(f"key wider than {self.config.key_bits} bits")
        if self.config.sat_bits < 64 and int(sats.max()) >> self.config.sat_bits:
            raise ParameterError(f"satellite wider than {self.config.sat_bits} bits")
        old_keys, old_sats = self.records()
        all_keys = np.concatenate([old_keys, keys])
        all_sats = np.concatenate([old_sats, sats])
        first = _first_occurrence(all_keys, all_sats, self.config.sat_bits)
        added = int(np.count_nonzero(first[len(old_keys):]))
        total = len(old_keys) + added
        if total > self.config.capacity:
            raise CapacityError(f"dictionary capacity {self.config.capacity} exceeded")
        b = self._grow_target(total)
        if b != self._B:
            self.resizes += 1
        self._rebuild(b, all_keys[first], all_sats[first])
        return added

    @classmethod
    def from_records(cls, config: DictConfig, keys, sats=None) -> LevelDict:
        d = cls(config)
        d.insert_many(keys, sats)
        return d

    def remove_many(self, keys, sats) -> int:
        """Remove the exact pairs given; returns how many were present."""
        keys = np.asarray(keys, dtype=np.uint64)
        sats = np.asarray(sats, dtype=np.uint64)
        if len(keys) * 32 < self.count:
            return sum(self.remove(k, s) for k, s in zip(keys.tolist(), sats.tolist()))
        old_keys, old_sats = self.records()
        sb = self.config.sat_bits
        gone = _pairs_in(old_keys, old_sats, keys, sats, sb)
        removed = int(np.count_nonzero(gone))
        if removed:
            self._rebuild(self._B, old_keys[~gone], old_sats[~gone])
        return removed

    def contains_pairs(self, keys, sats) -> np.ndarray:
        """Mask of which exact (key, sat) pairs are stored.  Does not count probes."""
        keys = np.asarray(keys, dtype=np.uint64)
        sats = np.asarray(sats, dtype=np.uint64)
        if len(keys) == 0 or self.count == 0:
            return np.zeros(len(keys), dtype=bool)
        sb = self.config.sat_bits
        if self._pair_cache is None or self._pair_cache[0] != self.version:
            own_k, own_s = self.records()
            if self.config.key_bits + sb <= 64:
                table = np.sort(_pair_codes(own_k, own_s, sb))
            else:
                table = set(zip(own_k.tolist(), own_s.tolist()))
            self._pair_cache = (self.version, table)
        table = self._pair_cache[1]
        if isinstance(table, set):
            return np.array([p in table for p in zip(keys.tolist(), sats.tolist())], dtype=bool)
        codes = _pair_codes(keys, sats, sb)
        idx = np.minimum(np.searchsorted(table, codes), len(table) - 1)
        return table[idx] == codes

    # -- cursors --------------------------------------------------------------

    def cursor(self, start_home: int = 0) -> DictCursor:
        return DictCursor(self, start_home)

    def scan(self, home: int, skip: int, m: int):
        """Up to ``m`` records starting ``skip`` records into the first run at or after ``home``.

        A position is just (home, skip), so scanning can resume after the
        dictionary has been mutated.  Returns ``(keys, sats, homes, home',
        skip', wrapped)`` where ``wrapped`` means the end of the table was
        reached and the position restarts at (0, 0).
        """
        if m <= 16:
            return self._scan_small(home, skip, m)
        cur = DictCursor(self, home)
        done = 0
        if skip and home < self._B and self._occ[home]:
            s, e = self._find_run(home)
            done = min(skip, e - s + 1)
            cur.take(done)
        keys, sats, homes = cur.take(m)
        if len(keys) < m:
            return keys, sats, homes, 0, 0, True
        last = int(homes[-1])
        taken = int(np.count_nonzero(homes == last))
        if last == home:
            taken += done
        return keys, sats, homes, last, taken, False

    def _next_occupied(self, h: int) -> int:
        width = 2 * BLOCK
        while h < self._B:
            hits = np.flatnonzero(self._occ[h:h + width])
            if len(hits):
                return h + int(hits[0])
            h += width
            width *= 2
        return -1

    def _scan_small(self, home: int, skip: int, m: int):
        pos: list[int] = []
        hs: list[int] = []
        h, done = home, skip
        while len(pos) < m:
            nh = self._next_occupied(h)
            if nh < 0:
                p = np.array(pos, dtype=np.int64)
                keys = self._join_many(np.array(hs, dtype=np.int64), self._rem[p])
                return keys, self._sat[p].copy(), np.array(hs, dtype=np.int64), 0, 0, True
            if nh != h:
                h, done = nh, 0
            s, e = self._find_run(h)
            start = s + done
            cnt = max(0, min(e - start + 1, m - len(pos)))
            pos.extend(range(start, start + cnt))
            hs.extend([h] * cnt)
            done += cnt
            if start + cnt > e:
                h, done = h + 1, 0
        p = np.array(pos, dtype=np.int64)
        homes = np.array(hs, dtype=np.int64)
        return self._join_many(homes, self._rem[p]), self._sat[p].copy(), homes, h, done, False

    # -- snapshot -------------------------------------------------------------

    def to_bytes(self) -> bytes:
        cfg = self.config
        if cfg.capacity >> 32:
            raise ParameterError("capacity does not fit the 32-bit snapshot header")
        header = struct.pack("<3I2f5I", cfg.key_bits, cfg.sat_bits, cfg.capacity,
                             cfg.load_limit, cfg.growth, self._B, self._P, self.count,
                             self._off_bits, 0)
        parts = [_bits_of(self._rem, self._rbits), _bits_of(self._sat, cfg.sat_bits),
                 self._re, self._used, self._occ, _bits_of(self._off.astype(np.uint64), self._off_bits)]
        payload = np.packbits(np.concatenate([p.reshape(-1) for p in parts]), bitorder="little")
        return header + payload.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> LevelDict:
        hb = 4 * HEADER_WORDS
        if len(data) < hb:
            raise ParameterError("truncated dictionary snapshot")
        key_bits, sat_bits, capacity, load, growth, b, p, count, off_bits, _ = struct.unpack("<3I2f5I", data[:hb])
        cfg = DictConfig(key_bits, sat_bits, capacity, float(load), reserve=max(1, count), growth=float(growth))
        d = cls(cfg, slots=b)
        d._alloc(b, p - b, off_bits)
        bits = np.unpackbits(np.frombuffer(data[hb:], dtype=np.uint8), bitorder="little")
        cur = 0

        def take(n, width):
            nonlocal cur
            chunk = bits[cur:cur + n * width]
            cur += n * width
            return _ints_of(chunk, n, width)

        d._rem = take(p, d._rbits)
        d._sat = take(p, sat_bits)
        d._re = bits[cur:cur + p].astype(bool)
        cur += p
        d._used = bits[cur:cur + p].astype(bool)
        cur += p
        d._occ = bits[cur:cur + b].astype(bool)
        cur += b
        d._off = take(len(d._off), off_bits).astype(np.int64)
        d.count = count
        return d

    def same_layout(self, other: LevelDict) -> bool:
        return (self._B == other._B and self._P == other._P
                and np.array_equal(self._rem, other._rem) and np.array_equal(self._sat, other._sat)
                and np.array_equal(self._re, other._re) and np.array_equal(self._used, other._used) and np.array_equal(self._occ, other._occ)
                and np.array_equal(self._off, other._off))


class DictCursor:
    """Resumable enumeration in slot order.

    Walks runs using two pointers (next occupied home, next runend), so each
    call costs time proportional to the records it returns.  Any mutation of
    the dictionary invalidates the cursor.
    """

    def __init__(self, d: LevelDict, start_home: int = 0):
        self.d = d
        self.version = d.version
        self.consumed = 0
        self._home = -1
        self._slot = 0
        self._end = -1
        start_home = max(0, min(start_home, d.slots))
        first = np.flatnonzero(d._occ[start_home:])
        if len(first) == 0 or start_home == 0:
            self._q_ptr = start_home
            self._e_ptr = 0
        else:
            h = start_home + int(first[0])
            s, e = d._find_run(h)
            self._home, self._slot, self._end = h, s, e
            self._q_ptr, self._e_ptr = h + 1, e + 1

    @property
    def exhausted(self) -> bool:
        if self._slot <= self._end:
            return False
        return not self.d._occ[self._q_ptr:].any()

    def _check(self) -> None:
        if self.d.version != self.version:
            raise StaleCursorError("dictionary mutated since the cursor was created")

    def take(self, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Next up to ``m`` records as (keys, sats, homes)."""
        self._check()
        d = self.d
        homes_out, pos_out = [], []
        need = m
        if self._slot <= self._end and need > 0:
            n = min(need, self._end - self._slot + 1)
            pos_out.append(np.arange(self._slot, self._slot + n))
            homes_out.append(np.full(n, self._home))
            self._slot += n
            need -= n
        width = max(2 * BLOCK, 2 * need)
        while need > 0 and self._q_ptr < d.slots:
            occ_q = np.flatnonzero(d._occ[self._q_ptr:self._q_ptr + width]) + self._q_ptr
            ends = np.flatnonzero(d._re[self._e_ptr:self._e_ptr + width + BLOCK]) + self._e_ptr
            r = min(len(occ_q), len(ends))
            if r == 0:
                if self._q_ptr + width >= d.slots:
                    self._q_ptr = d.slots
                    break
                width *= 2
                continue
            occ_q, ends = occ_q[:r], ends[:r]
            prev = np.empty_like(ends)
            prev[0] = self._e_ptr
            prev[1:] = ends[:-1] + 1
            starts = np.maximum(occ_q, prev)
            lens = ends - starts + 1
            cum = np.cumsum(lens)
            k = int(np.searchsorted(cum, need))  # runs fully or partly used
            k = min(k, r - 1)
            use_lens = lens[:k + 1].copy()
            taken_total = int(cum[k])
            if taken_total > need:
                use_lens[k] -= taken_total - need
            pos, run = _concat_ranges(starts[:k + 1], use_lens)
            pos_out.append(pos)
            homes_out.append(occ_q[run])
            need -= len(pos)
            self._home = int(occ_q[k])
            self._slot = int(starts[k] + use_lens[k])
            self._end = int(ends[k])
            self._q_ptr = int(occ_q[k]) + 1
            self._e_ptr = int(ends[k]) + 1
            if need > 0 and k == r - 1:
                width *= 2
        pos = np.concatenate(pos_out).astype(np.int64) if pos_out else np.zeros(0, dtype=np.int64)
        homes = np.concatenate(homes_out).astype(np.int64) if homes_out else np.zeros(0, dtype=np.int64)
        self.consumed += len(pos)
        keys = d._join_many(homes, d._rem[pos]) if len(pos) else np.zeros(0, dtype=np.uint64)
        return keys, d._sat[pos].copy(), homes

    def next(self, m: int = 1) -> list[DictRecord]:
        keys, sats, _ = self.take(m)
        return [DictRecord(k, s) for k, s in zip(keys.tolist(), sats.tolist())]


# -- helpers --------------------------------------------------------------------

def _pair_codes(keys: np.ndarray, sats: np.ndarray, sat_bits: int):
    """A sortable identity for (key, sat) pairs, or None if it would not fit 64 bits."""
    if sat_bits == 0:
        return keys
    if sat_bits < 64 and int(keys.max(initial=0)).bit_length() + sat_bits <= 64:
        return (keys << np.uint64(sat_bits)) | sats
    return None


def _first_occurrence(keys: np.ndarray, sats: np.ndarray, sat_bits: int) -> np.ndarray:
    codes = _pair_codes(keys, sats, sat_bits)
    if codes is not None:
        _, idx = np.unique(codes, return_index=True)
    else:
        _, idx = np.unique(np.stack([keys, sats], axis=1), axis=0, return_index=True)
    mask = np.zeros(len(keys), dtype=bool)
    mask[idx] = True
    return mask


def _pairs_in(keys, sats, qkeys, qsats, sat_bits) -> np.ndarray:
    """Mask over (keys, sats) of pairs that also appear in (qkeys, qsats)."""
    both_k = np.concatenate([keys, qkeys])
    codes = _pair_codes(both_k, np.concatenate([sats, qsats]), sat_bits)
    if codes is None:
        q = set(zip(qkeys.tolist(), qsats.tolist()))
        return np.array([(k, s) in q for k, s in zip(keys.tolist(), sats.tolist())], dtype=bool)
    return np.isin(codes[:len(keys)], codes[len(keys):])


def _bits_of(values: np.ndarray, width: int) -> np.ndarray:
    if width == 0:
        return np.zeros(0, dtype=np.uint8)
    shifts = np.arange(width, dtype=np.uint64)
    return ((values.astype(np.uint64)[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)


def _ints_of(bits: np.ndarray, n: int, width: int) -> np.ndarray:
    if width == 0:
        return np.zeros(n, dtype=np.uint64)
    m = bits.reshape(n, width).astype(np.uint64)
    return (m << np.arange(width, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)
