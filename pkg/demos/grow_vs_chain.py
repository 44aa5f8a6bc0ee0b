"""Feed the same stream to a chain of fixed filters and to the growable filter,
and watch bits per element as the set grows."""
import numpy as np

from amqgrow import ChainFilter, GrowConfig, GrowFilter

eps = 1 / 64
rng = np.random.default_rng(0)
keys = rng.integers(0, 1 << 32, size=1 << 18, dtype=np.uint64)
probe = rng.integers(0, 1 << 32, size=200_000, dtype=np.uint64)
probe = probe[~np.isin(probe, keys)]

chain = ChainFilter(eps, seed=1)
grow = GrowFilter(GrowConfig(eps, seed=1))

print(f"{'n':>8} {'chain b/e':>10} {'grow b/e':>9} {'chain fpr':>10} {'grow fpr':>9} {'chain lookups':>14}")
done = 0
for k in range(10, 19):
    n = 1 << k
    chain.insert_many(keys[done:n])
    grow.insert_many(keys[done:n])
    done = n
    print(f"{n:>8} {chain.space_bits() / n:>10.2f} {grow.space_bits() / n:>9.2f} "
          f"{chain.member_many(probe).mean():>10.5f} {grow.member_many(probe).mean():>9.5f} "
          f"{chain.level_count:>14}")

# The chain pays log(1/eps_i) = log(1/eps) + 2 log i bits at level i, and
# every query visits every level.  The growable filter keeps one dictionary
# whose keys lengthen by one bit per level, so a query is a single lookup.
assert grow.member_many(keys).all() and chain.member_many(keys).all()
