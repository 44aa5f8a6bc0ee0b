import numpy as np
import pytest

from amqgrow.deamortized import DeamortizedFilter
from amqgrow.errors import ParameterError
from amqgrow.grow import GrowConfig
from amqgrow.oracle import StreamLog, reference_records

from conftest import uniform_keys


def test_signatures_are_widened():
    f = DeamortizedFilter(GrowConfig(1 / 64, i0=4))
    assert f.params.widen == 1
    assert f.params.level_bits(4) == f.params.eps_bits + 4 + 3


def test_rejects_bucketing():
    with pytest.raises(ParameterError):
        DeamortizedFilter(GrowConfig(1 / 64, bucketing=True))


def test_migration_lifecycle(rng):
    f = DeamortizedFilter(GrowConfig(1 / 64, i0=6, seed=2))
    keys = uniform_keys(rng, 200)
    f.insert_many(keys[:63])
    assert not f.migrating
    f.insert(int(keys[63]))
    assert f.migrating and f.source is not None
    src_before = f.source.count
    # the next element lands in the target only
    x = int(keys[64])
    f.insert(x)
    assert f.dict.contains(f.params.prefix(x, f.level))
    assert f.source.count == src_before
    # an element not yet migrated is still found through the source
    assert f.member_many(keys[:65]).all()
    f.insert_many(keys[65:])
    assert not f.migrating
    level, used, sub_len = f.migration_finish[-1]
    assert 2 * used <= sub_len


@pytest.mark.parametrize("seed", range(6))
def test_equivalence_with_reference(seed):
    rng = np.random.default_rng(seed)
    cfg = GrowConfig(1 / 16, i0=1, seed=seed)
    f = DeamortizedFilter(cfg)
    log = StreamLog()
    bad = []

    def check(g):
        if g.record_set() != reference_records(log.prefix(g.n), g.params, cfg, g.level):
            bad.append(g.level)

    f.on_transition.append(check)
    for x in uniform_keys(rng, 2000).tolist():
        log.insert(x)
        f.insert(x)
    assert len(f.migration_finish) >= 9 and not bad


def test_bulk_matches_scalar(rng):
    cfg = GrowConfig(1 / 64, i0=3, seed=6)
    a, b = DeamortizedFilter(cfg), DeamortizedFilter(cfg)
    keys = uniform_keys(rng, 5000)
    a.insert_many(keys)
    for x in keys.tolist():
        b.insert(x)
    assert a.record_set() == b.record_set()
    assert a.migration_finish == b.migration_finish
    assert a.max_moves_per_insert == b.max_moves_per_insert == 8
    assert b.max_ops_per_insert <= 2 * 8 + 1


def test_query_lookups_bounded(rng):
    f = DeamortizedFilter(GrowConfig(1 / 64, i0=4, seed=1))
    keys = uniform_keys(rng, 600)
    f.insert_many(keys[:512])  # mid-migration
    assert f.migrating
    for x in keys.tolist():
        before = f.lookups
        f.member(x)
        assert f.lookups - before <= 2
    assert f.member_many(keys[:512]).all()
