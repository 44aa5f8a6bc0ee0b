"""Deletions with a background scanner, and migration spread over inserts."""
import numpy as np

from amqgrow import DeamortizedFilter, DeletionFilter, GrowConfig
from amqgrow.harness import deletion_stream, replay
from amqgrow.oracle import live_set

log = deletion_stream(20_000, 32, seed=4)
f = DeletionFilter(GrowConfig(1 / 64, seed=4))
replay(f, log)
live = live_set(log)
gone = {x for op, x in log if op == "delete"}
la = np.array(sorted(live), dtype=np.uint64)
ga = np.array(sorted(gone), dtype=np.uint64)
print(f"{len(log)} ops, {len(live)} live, {len(gone)} deleted")
print("live keys all present:", f.member_many(la).all())
print(f"deleted keys still answering Yes: {f.member_many(ga).mean():.5f}")
print(f"records {f.record_count()}, secondary {len(f.secondary)}, purged so far {f.purged}")
f.scan_pass()
f.scan_pass()
print(f"after two scan passes: records {f.record_count()}")

# de-amortized: no insert moves more than 8 old records
d = DeamortizedFilter(GrowConfig(1 / 64, seed=5))
keys = np.random.default_rng(5).integers(0, 1 << 32, size=300_000, dtype=np.uint64)
d.insert_many(keys)
print(f"max moves per insert {d.max_moves_per_insert}, max dict ops per insert {d.max_ops_per_insert}")
for level, used, sub_len in d.migration_finish[-4:]:
    print(f"  level {level}: migration done after {used} of {sub_len} inserts")
