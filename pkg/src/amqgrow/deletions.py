"""Growable filter with deletions.

Every primary record carries the level ``L`` at which its element entered and
a deleted bit.  All records descending from one element form a *family*; its
*root* is the family member whose key is zero after the branch point, i.e.
the zero extension of the element's true prefix.  Deleting an element marks
its root, which kills the whole family at once.  A background scanner, a few
records per update, removes deleted roots and the records of dead families.

An element inserted while the filter already answers Yes for it would share
another family's records, so it goes to an exact secondary set instead.  The
target rate is clamped to ``min(eps, 1/w)`` so that set stays small.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .errors import ImproperDeletionError, ParameterError
from .grow import GrowConfig, GrowFilter
from .hashing import buffer_len_for, child_seed, derive_params

SCAN_PER_UPDATE = 2
DELETION_HASH_DEGREE = 4


def level_field_bits(w: int) -> int:
    """Bits for an entry level in [1, w]: ceil(log2 w) + 1."""
    return buffer_len_for(w) + 1


class SecondarySet:
    """Exact set of full keys with a round-robin order for re-checks.

    Space is charged as an open-addressed table of ``w``-bit words at load at
    most one half.
    """

    def __init__(self, w: int):
        self.w = w
        self.items: set[int] = set()
        self.queue: deque[int] = deque()

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, x: int) -> bool:
        return x in self.items

    def add(self, x: int) -> None:
        if x not in self.items:
            self.items.add(x)
            self.queue.append(x)

    def discard(self, x: int) -> bool:
        if x in self.items:
            self.items.remove(x)
            return True
        return False

    def next_candidates(self, m: int) -> list[int]:
        """Up to ``m`` distinct live elements in round-robin order."""
        m = min(m, len(self.items))
        out = []
        while self.queue and len(out) < m:
            x = self.queue.popleft()
            if x in self.items:
                out.append(x)
                self.queue.append(x)
        if len(self.queue) > 2 * len(self.items) + 16:
            self.queue = deque(x for x in self.queue if x in self.items)
        return out

    def contains_many(self, xs: np.ndarray) -> np.ndarray:
        if not self.items:
            return np.zeros(len(xs), dtype=bool)
        return np.isin(xs, np.fromiter(self.items, dtype=np.uint64, count=len(self.items)))

    def space_bits(self) -> int:
        if not self.items:
            return 0
        slots = 1 << (2 * len(self.items) - 1).bit_length()
        return self.w * slots


class DeletionFilter(GrowFilter):
    variant = "grow-deletions"

    def __init__(self, config: GrowConfig, params=None, scan_per_update: int = SCAN_PER_UPDATE,
                 hash_degree: int = DELETION_HASH_DEGREE):
        if config.bucketing:
            raise ParameterError("deletions are not combined with bucketing")
        if params is None:
            params = derive_params(self.target_epsilon(config), config.w, child_seed(config.seed, 0),
                                   degree=hash_degree)
        self.lbits = level_field_bits(config.w)
        self.extra_bits = self.lbits + 1
        super().__init__(config, params)
        self.scan_per_update = scan_per_update
        self.secondary = SecondarySet(config.w)
        self.scan_home = 0
        self.scan_skip = 0
        self.scan_passes = 0
        self.scanned = 0
        self.purged = 0
        self.moved_to_primary = 0
        self.deletes = 0

    @staticmethod
    def target_epsilon(config: GrowConfig) -> float:
        return min(config.epsilon, 1.0 / config.w)

    @property
    def n_live(self) -> int:
        return self.n - self.deletes

    # -- satellite fields -------------------------------------------------------------

    def pack(self, code: int, level: int, deleted: int = 0) -> int:
        return (code << self.extra_bits) | (level << 1) | deleted

    def unpack(self, sat: int) -> tuple[int, int, int]:
        return sat >> self.extra_bits, (sat >> 1) & ((1 << self.lbits) - 1), sat & 1

    def branch_point(self, entry: int) -> int:
        """Bits of a record key shared by its whole family at the current level."""
        p = self.params
        return min(p.level_bits(entry) + p.r, p.ell, self.key_bits)

    def root_of(self, key: int, sat: int) -> tuple[int, int]:
        """(key, sat) the family root must have for the family to be alive."""
        s = self.key_bits - self.branch_point((sat >> 1) & ((1 << self.lbits) - 1))
        return (key >> s) << s, sat & ~1

    def _roots_many(self, keys: np.ndarray, sats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        entry = ((sats >> np.uint64(1)) & np.uint64((1 << self.lbits) - 1)).astype(np.int64)
        l_entry = p.eps_bits + entry + 2 + p.widen
        bp = np.minimum(np.minimum(l_entry + p.r, p.ell), self.key_bits)
        s = (self.key_bits - bp).astype(np.uint64)
        return (keys >> s) << s, sats & ~np.uint64(1)

    def _alive(self, key: int, sat: int) -> bool:
        return self.dict.has_record(*self.root_of(key, sat))

    def _alive_many(self, keys: np.ndarray, sats: np.ndarray) -> np.ndarray:
        rk, rs = self._roots_many(keys, sats)
        return self.dict.contains_pairs(rk, rs)

    # -- queries -------------------------------------------------------------------------

    def primary_member(self, x: int) -> bool:
        key = self.params.prefix(x, self.level)
        self.lookups += 1
        return any(self._alive(key, s) for s in self.dict.lookup(key))

    def member(self, x: int) -> bool:
        x = self._check_key(x)
        self.queries += 1
        self.last_probes = 1
        return x in self.secondary or self.primary_member(x)

    def _primary_member_many(self, xs: np.ndarray) -> np.ndarray:
        keys = self.params.prefix_many(xs, self.level)
        src, sats = self.dict.lookup_pairs(keys)
        self.lookups += len(xs)
        out = np.zeros(len(xs), dtype=bool)
        if len(src):
            alive = self._alive_many(keys[src], sats)
            out[src[alive]] = True
        return out

    def member_many(self, xs) -> np.ndarray:
        xs = self._check_keys(xs)
        self.queries += len(xs)
        self.last_probes = 1
        return self.secondary.contains_many(xs) | self._primary_member_many(xs)

    # -- updates -------------------------------------------------------------------------

    def _store(self, x: int) -> None:
        key, code = self.mode1_record(x)
        self.dict.insert(key, self.pack(code, self.level))

    def insert(self, x: int) -> None:
        x = self._check_key(x)
        if self.sub_count == self.sub_len:
            self._transition()
        if self.primary_member(x):
            self.secondary.add(x)
        else:
            self._store(x)
        self.sub_count += 1
        self.n += 1
        self._check_capacity()
        self.scan_step()

    def insert_many(self, xs) -> None:
        """Batch insert; a key counts as already present if the table or an
        earlier key of the batch covers it."""
        xs = self._check_keys(xs)
        at = 0
        while at < len(xs):
            if self.sub_count == self.sub_len:
                self._transition()
            take = min(self.sub_len - self.sub_count, len(xs) - at)
            chunk = xs[at:at + take]
            sigs = self.params.full_many(chunk)
            keys = self.params.prefix_many(chunk, self.level, sigs)
            covered = self._primary_member_many(chunk)
            first = np.zeros(take, dtype=bool)
            first[np.unique(keys, return_index=True)[1]] = True
            covered |= ~first
            for x in chunk[covered].tolist():
                self.secondary.add(x)
            codes = self.params.buffer_code_many(chunk, self.level, sigs)
            fresh = ~covered
            sats = (codes[fresh] << np.uint64(self.extra_bits)) | np.uint64(self.level << 1)
            self.dict.insert_many(keys[fresh], sats)
            self.sub_count += take
            self.n += take
            at += take
            self._check_capacity()
            self._scan(self.scan_per_update * take, take)

    def _mark(self, x: int) -> tuple[int, int]:
        """Root (key, sat) of the live family ``x`` belongs to."""
        key = self.params.prefix(x, self.level)
        for sat in self.dict.lookup(key):
            root = self.root_of(key, sat)
            if self.dict.has_record(*root):
                return root
        raise ImproperDeletionError(f"no live record for key {x:#x} at level {self.level}")

    def delete(self, x: int) -> None:
        x = self._check_key(x)
        if not self.secondary.discard(x):
            rk, rs = self._mark(x)
            self.dict.replace_sat(rk, rs, rs | 1)
        self.deletes += 1
        self.scan_step()

    def delete_many(self, xs) -> None:
        """Batch delete of distinct live keys."""
        xs = self._check_keys(xs)
        if len(np.unique(xs)) != len(xs):
            raise ParameterError("batch deletes must be distinct keys")
        primary = []
        for x in xs.tolist():
            if not self.secondary.discard(x):
                primary.append(x)
        if primary:
            px = np.array(primary, dtype=np.uint64)
            keys = self.params.prefix_many(px, self.level)
            src, sats = self.dict.lookup_pairs(keys)
            rk, rs = self._roots_many(keys[src], sats)
            ok = self.dict.contains_pairs(rk, rs)
            src, rk, rs = src[ok], rk[ok], rs[ok]
            _, first = np.unique(src, return_index=True)
            if len(first) != len(px):
                missing = np.setdiff1d(np.arange(len(px)), src)
                raise ImproperDeletionError(f"no live record for key {int(px[missing[0]]):#x} at level {self.level}")
            rk, rs = rk[first], rs[first]
            self.dict.remove_many(rk, rs)
            self.dict.insert_many(rk, rs | np.uint64(1))
        self.deletes += len(xs)
        self._scan(self.scan_per_update * len(xs), len(xs))

    # -- cleanup -------------------------------------------------------------------------

    def _dead(self, keys: np.ndarray, sats: np.ndarray) -> np.ndarray:
        return ((sats & np.uint64(1)) == 1) | ~self._alive_many(keys, sats)

    def scan_step(self) -> None:
        """Visit the next few records, drop dead ones, and re-check one secondary key."""
        self._scan(self.scan_per_update, 1)

    def _scan(self, m: int, rechecks: int) -> None:
        d = self.dict
        keys, sats, homes, home, skip, wrapped = d.scan(self.scan_home, self.scan_skip, m)
        self.scanned += len(keys)
        if len(keys):
            if len(keys) <= 4:
                dead = np.array([s & 1 == 1 or not self._alive(k, s)
                                 for k, s in zip(keys.tolist(), sats.tolist())], dtype=bool)
            else:
                dead = self._dead(keys, sats)
            if dead.any():
                self.purged += int(dead.sum())
                if not wrapped:
                    skip -= int(np.count_nonzero(dead & (homes == home)))
                d.remove_many(keys[dead], sats[dead])
        if wrapped:
            self.scan_passes += 1
        self.scan_home, self.scan_skip = home, skip
        self._recheck(rechecks)

    def scan_pass(self) -> None:
        """Run scan steps until the scanner completes a pass over the table."""
        target = self.scan_passes + 1
        while self.scan_passes < target:
            self._scan(max(64, self.scan_per_update), 0)

    def _recheck(self, m: int) -> None:
        for y in self.secondary.next_candidates(min(m, len(self.secondary))):
            if not self.primary_member(y):
                self.secondary.discard(y)
                self._store(y)
                self.moved_to_primary += 1

    def _transition(self) -> None:
        keys, sats = self.dict.records()
        keep = ~self._dead(keys, sats) if len(keys) else np.zeros(0, dtype=bool)
        self.purged += int(len(keys) - keep.sum())
        if not keep.all():
            self.dict.remove_many(keys[~keep], sats[~keep])
        super()._transition()
        self.scan_home, self.scan_skip = 0, 0

    # -- accounting ----------------------------------------------------------------------

    def space_bits(self) -> int:
        return super().space_bits() + self.secondary.space_bits()

    def primary_space_bits(self) -> int:
        return super().space_bits()

    def to_bytes(self) -> bytes:
        raise ParameterError("snapshots are not supported with deletions enabled")
