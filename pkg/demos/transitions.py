"""Step through a few transitions of a tiny growable filter and print its records."""
from amqgrow import GrowConfig, GrowFilter
from amqgrow.hashing import code_to_trits, to_bits, trits_str

g = GrowFilter(GrowConfig(0.25, w=8, i0=1, seed=3))
p = g.params
print(f"ell={p.ell} r={p.r} key width at level i = {p.eps_bits} + i + 2")


def dump(f):
    width = p.level_bits(f.level)
    for key, code in sorted(f.record_set()):
        print(f"   {to_bits(key, width)}  {trits_str(code_to_trits(code, p.r))}")


g.on_transition.append(lambda f: print(f"-- transition into level {f.level} after {f.n} inserts"))
for x in (17, 200, 33, 90, 5, 141, 250):
    g.insert(x)
    print(f"insert {x:3d}: level {g.level}, {g.record_count()} records")
    dump(g)

# Records whose buffers run dry branch into both children; each element's
# true prefix stays present, so every inserted key still answers Yes.
print(all(g.member(x) for x in (17, 200, 33, 90, 5, 141, 250)))
