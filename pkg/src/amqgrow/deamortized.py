"""Growable filter with worst-case constant insertion work.

A transition no longer rebuilds the dictionary in one go.  The old dictionary
(the *source*) stays live while each insert of the new subsequence moves a
fixed number of its records into the new one (the *target*) and then stores
its own element in the target.  Queries consult both dictionaries while a
migration is running.  Every level key carries one extra signature bit so the
two lookups together still stay within the target rate.
"""
from __future__ import annotations

import math

import numpy as np

from .compact_dict import DictCursor, LevelDict
from .errors import InvariantError, ParameterError, UniverseExhaustedError
from .grow import GrowConfig, GrowFilter, expand_records

STEPS_PER_INSERT = 8


class DeamortizedFilter(GrowFilter):
    variant = "grow-deamortized"
    widen = 1

    def __init__(self, config: GrowConfig, params=None, steps_per_insert: int = STEPS_PER_INSERT):
        if config.bucketing:
            raise ParameterError("the de-amortized filter does not bucket")
        if steps_per_insert < 1:
            raise ParameterError("steps_per_insert must be >= 1")
        super().__init__(config, params)
        self.steps_per_insert = steps_per_insert
        self.source: LevelDict | None = None
        self.cursor: DictCursor | None = None
        self.moved = 0
        self.max_moves_per_insert = 0
        self.max_ops_per_insert = 0
        self.migration_finish: list[tuple[int, int, int]] = []  # (level, inserts used, sub_len)

    @property
    def migrating(self) -> bool:
        return self.source is not None

    def live_dicts(self) -> list[LevelDict]:
        return [self.dict] if self.source is None else [self.dict, self.source]

    # -- migration ------------------------------------------------------------------

    def _transition(self) -> None:
        if self.source is not None:
            raise InvariantError(f"migration into level {self.level} still running at the next transition")
        if self.level + 1 > self.params.w:
            raise UniverseExhaustedError(f"universe of 2^{self.params.w} keys exhausted")
        src = self.dict
        sub_len_next = 1 << self.level
        reserve = math.ceil(1.25 * src.count) + sub_len_next
        self.dict = self._new_dict(self.level + 1, reserve=reserve)
        self.source = src
        self.cursor = src.cursor()
        self.moved = 0
        self.level += 1
        self.sub_count = 0
        self.transitions += 1
        self._finish_if_done()

    def _finish_if_done(self) -> None:
        if self.source is not None and self.cursor.exhausted:
            self.migration_finish.append((self.level, self.sub_count, self.sub_len))
            if 2 * self.sub_count > self.sub_len:
                raise InvariantError(
                    f"migration into level {self.level} finished after {self.sub_count} of {self.sub_len} inserts")
            self._retire(self.source)
            self.source = None
            self.cursor = None
            for cb in self.on_transition:
                cb(self)

    def _moves_for(self, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Take the source records charged to the next ``m`` inserts.

        Returns mapped keys and satellites plus, per insert, the number of
        target inserts its moves produced.
        """
        keys, sats, _ = self.cursor.take(self.steps_per_insert * m)
        self.moved += len(keys)
        nk, ns = expand_records(keys, sats, self.extra_bits)
        codes = sats >> np.uint64(self.extra_bits)
        fanout = np.where(codes == 1, 2, 1)
        per_insert = np.add.reduceat(fanout, np.arange(0, len(fanout), self.steps_per_insert)) \
            if len(fanout) else np.zeros(0, dtype=np.int64)
        moves = np.minimum(self.steps_per_insert,
                           np.maximum(0, len(keys) - self.steps_per_insert * np.arange(m)))
        self.max_moves_per_insert = max(self.max_moves_per_insert, int(moves.max(initial=0)))
        return nk, ns, per_insert

    # -- insertion --------------------------------------------------------------------

    def insert(self, x: int) -> None:
        x = self._check_key(x)
        if self.sub_count == self.sub_len:
            self._transition()
        ops = 1
        if self.source is not None:
            nk, ns, per = self._moves_for(1)
            self.dict.insert_many(nk, ns)
            ops += int(per.sum())
        key, code = self.mode1_record(x)
        self.dict.insert(key, code << self.extra_bits)
        self.max_ops_per_insert = max(self.max_ops_per_insert, ops)
        self.sub_count += 1
        self.n += 1
        self._finish_if_done()
        self._check_capacity()

    def insert_many(self, xs) -> None:
        """Batch insert with the same migration schedule as one-at-a-time inserts."""
        xs = self._check_keys(xs)
        at = 0
        while at < len(xs):
            if self.sub_count == self.sub_len:
                self._transition()
            take = min(self.sub_len - self.sub_count, len(xs) - at)
            if self.source is not None:
                # stop the batch where the migration ends so the finish point is exact
                left = self.source.count - self.cursor.consumed
                take = min(take, max(1, -(-left // self.steps_per_insert)))
            chunk = xs[at:at + take]
            sigs = self.params.full_many(chunk)
            keys = self.params.prefix_many(chunk, self.level, sigs)
            sats = self.params.buffer_code_many(chunk, self.level, sigs) << np.uint64(self.extra_bits)
            ops = 1
            if self.source is not None:
                nk, ns, per = self._moves_for(take)
                keys = np.concatenate([nk, keys])
                sats = np.concatenate([ns, sats])
                ops += int(per.max(initial=0))
            self.dict.insert_many(keys, sats)
            self.max_ops_per_insert = max(self.max_ops_per_insert, ops)
            self.sub_count += take
            self.n += take
            at += take
            self._finish_if_done()
            self._check_capacity()

    # -- queries ------------------------------------------------------------------------

    def member(self, x: int) -> bool:
        x = self._check_key(x)
        self.queries += 1
        sig = self.params.full(x)
        self.last_probes = 1
        if self.dict.contains(sig >> (self.params.ell - self.key_bits)):
            self.lookups += 1
            return True
        if self.source is None:
            self.lookups += 1
            return False
        self.last_probes = 2
        self.lookups += 2
        return self.source.contains(sig >> (self.params.ell - self.params.level_bits(self.level - 1)))

    def member_many(self, xs) -> np.ndarray:
        xs = self._check_keys(xs)
        self.queries += len(xs)
        sigs = self.params.full_many(xs)
        hit = self.dict.contains_many(self.params.prefix_many(xs, self.level, sigs))
        self.lookups += len(xs)
        self.last_probes = 1
        if self.source is not None:
            miss = ~hit
            hit[miss] = self.source.contains_many(self.params.prefix_many(xs[miss], self.level - 1, sigs[miss]))
            self.lookups += int(miss.sum())
            self.last_probes = 2 if miss.any() else 1
        return hit

    def _check_capacity(self) -> None:
        super()._check_capacity()
        if self.source is not None and self.source.count > (1 << (self.level + 1)):
            raise InvariantError("source dictionary exceeds its level bound")
