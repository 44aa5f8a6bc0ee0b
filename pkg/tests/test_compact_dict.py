import math
import random

import numpy as np
import pytest
from hypothesis import settings, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from amqgrow.compact_dict import DictConfig, DictRecord, LevelDict
from amqgrow.errors import AllocationError, CapacityError, ParameterError, StaleCursorError


def make(key_bits=10, sat_bits=12, capacity=16, **kw):
    return LevelDict(DictConfig(key_bits, sat_bits, capacity, **kw))


def test_fresh_dict_is_empty():
    d = make()
    assert d.count == 0
    assert d.enumerate() == []
    assert d.lookup(0b1010) == []


def test_fresh_space_from_config():
    # 16 records at load 0.85 -> 19 home slots, 8 tail slots, one 64-slot offset block
    d = make()
    b = math.ceil(16 / 0.85)
    p = b + 8
    rbits = 10 - int(math.log2(b))
    assert d.slots == b and d.physical_slots == p
    assert d.space_bits() == 320 + p * (rbits + 12 + 2) + b + 8


def test_insert_lookup_examples():
    d = make()
    assert d.insert(0b1010, 0b0011)
    assert d.lookup(0b1010) == [0b0011]
    assert not d.insert(0b1010, 0b0011)
    assert d.count == 1
    d.insert(0b1010, 0b1100)
    assert sorted(d.lookup(0b1010)) == [0b0011, 0b1100]


def test_remove_examples():
    d = make()
    d.insert(5, 1)
    assert d.remove(5, 1)
    assert d.lookup(5) == []
    assert not d.remove(5, 1)
    d.insert(5, 1)
    d.remove(5, 1)
    d.insert(5, 1)
    assert d.count == 1


def test_enumerate_three():
    d = make()
    for k in (3, 900, 77):
        d.insert(k, k & 7)
    assert sorted(d.enumerate()) == sorted(DictRecord(k, k & 7) for k in (3, 900, 77))


def test_capacity_error():
    d = make(capacity=4)
    for k in range(4):
        d.insert(k, 0)
    with pytest.raises(CapacityError):
        d.insert(99, 0)
    d.insert(2, 0)  # duplicate is absorbed, not an overflow


def test_allocation_cap():
    with pytest.raises(AllocationError):
        DictConfig(40, 20, 1 << 40, max_bits=1 << 30)
    DictConfig(40, 20, 1 << 40, reserve=1024, max_bits=1 << 30)


def test_satellite_width_checked():
    with pytest.raises(ParameterError):
        make(sat_bits=3).insert(1, 8)


def test_stale_cursor():
    d = make()
    d.insert(1, 1)
    c = d.cursor()
    d.insert(2, 2)
    with pytest.raises(StaleCursorError):
        c.take(1)


def test_skewed_keys_many_satellites():
    # one key with hundreds of satellites must not blow up the layout
    d = LevelDict(DictConfig(16, 12, 10_000, reserve=8))
    for s in range(600):
        d.insert(42, s)
    d.insert_many(np.full(300, 43, dtype=np.uint64), np.arange(300, dtype=np.uint64))
    assert sorted(d.lookup(42)) == list(range(600))
    assert d.count == 900


def test_probe_stats_at_high_load():
    rng = np.random.default_rng(3)
    d = LevelDict(DictConfig(30, 4, 1 << 16, reserve=1 << 16))
    keys = np.unique(rng.integers(0, 1 << 30, size=int(0.85 * d.slots), dtype=np.uint64))
    d.insert_many(keys, keys & np.uint64(15))
    assert d.count / d.slots <= 0.85
    d.contains_many(rng.integers(0, 1 << 30, size=100_000, dtype=np.uint64))
    mean, p99 = d.probe_stats()
    assert mean <= 4 and p99 <= 32


class DictShadow(RuleBasedStateMachine):
    """Random mutations checked against a plain set of (key, sat) pairs."""

    def __init__(self):
        super().__init__()
        self.d = LevelDict(DictConfig(12, 4, 1 << 20, reserve=4))
        self.shadow: set[tuple[int, int]] = set()

    keys = st.integers(0, (1 << 12) - 1) | st.integers(0, 15)
    sats = st.integers(0, 15)

    @rule(k=keys, s=sats)
    def insert(self, k, s):
        assert self.d.insert(k, s) == ((k, s) not in self.shadow)
        self.shadow.add((k, s))

    @rule(k=keys, s=sats)
    def remove(self, k, s):
        assert self.d.remove(k, s) == ((k, s) in self.shadow)
        self.shadow.discard((k, s))

    @rule(ks=st.lists(st.tuples(keys, sats), max_size=40))
    def insert_many(self, ks):
        if ks:
            k, s = (np.array(v, dtype=np.uint64) for v in zip(*ks))
            self.d.insert_many(k, s)
            self.shadow.update(ks)

    @rule(k=keys)
    def lookup(self, k):
        assert sorted(self.d.lookup(k)) == sorted(s for kk, s in self.shadow if kk == k)

    @invariant()
    def same_set(self):
        assert self.d.count == len(self.shadow)
        keys, sats = self.d.records()
        assert set(zip(keys.tolist(), sats.tolist())) == self.shadow


TestDictShadow = DictShadow.TestCase
TestDictShadow.settings = settings(max_examples=60, stateful_step_count=60, deadline=None)


@pytest.mark.parametrize("trial", range(8))
def test_layout_is_canonical(trial):
    rng = random.Random(trial)
    kb, sb = rng.choice([(8, 0), (20, 3), (40, 9), (64, 5)])
    d = LevelDict(DictConfig(kb, sb, 1 << 20, reserve=16))
    for _ in range(1500):
        k = rng.randrange(1 << min(kb, rng.choice([6, 12, kb])))
        s = rng.randrange(1 << sb) if sb else 0
        if rng.random() < 0.75:
            d.insert(k, s)
        else:
            d.remove(k, s)
    keys, sats = d.records()
    e = LevelDict(DictConfig(kb, sb, 1 << 20, reserve=16))
    e.resize(d.slots)
    e.insert_many(keys[::-1], sats[::-1])
    assert e.slots == d.slots and e.same_layout(d)
    assert LevelDict.from_bytes(d.to_bytes()).same_layout(d)
    # cursor and scan both walk the records in slot order
    c, got = d.cursor(), []
    while not c.exhausted:
        kk, ss, _ = c.take(rng.randrange(1, 50))
        got += zip(kk.tolist(), ss.tolist())
    ref = list(zip(keys.tolist(), sats.tolist()))
    assert got == ref
    for m in (1, 3, 17, 40):
        h = skip = 0
        got = []
        while True:
            kk, ss, _, h, skip, wrapped = d.scan(h, skip, m)
            got += zip(kk.tolist(), ss.tolist())
            if wrapped:
                break
        assert got == ref


def test_vector_queries_match_scalar():
    rng = np.random.default_rng(0)
    d = LevelDict(DictConfig(16, 6, 1 << 14, reserve=64))
    keys = rng.integers(0, 1 << 16, size=3000, dtype=np.uint64)
    sats = rng.integers(0, 64, size=3000, dtype=np.uint64)
    d.insert_many(keys, sats)
    q = rng.integers(0, 1 << 16, size=2000, dtype=np.uint64)
    assert d.contains_many(q).tolist() == [d.contains(int(x)) for x in q]
    src, got = d.lookup_pairs(q)
    for j in range(0, 2000, 97):
        assert sorted(got[src == j].tolist()) == sorted(d.lookup(int(q[j])))
    qs = rng.integers(0, 64, size=2000, dtype=np.uint64)
    assert d.contains_pairs(q, qs).tolist() == [d.has_record(int(a), int(b)) for a, b in zip(q, qs)]
