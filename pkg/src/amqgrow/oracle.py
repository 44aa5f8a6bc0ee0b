"""Brute-force references: exact sets over a logged stream and the growable filter's
record set rebuilt from scratch for every element.

Nothing here shares code with the filters; ``reference_records`` derives each
element's records in closed form from its signature and its entry level.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import ParameterError
from .hashing import HashParams

INSERT = "insert"
DELETE = "delete"


@dataclass
class StreamLog:
    """Ordered (op, key) pairs; op is ``"insert"`` or ``"delete"``."""

    ops: list[tuple[str, int]] = field(default_factory=list)

    def insert(self, x: int) -> None:
        self.ops.append((INSERT, int(x)))

    def delete(self, x: int) -> None:
        self.ops.append((DELETE, int(x)))

    def extend_inserts(self, xs: Iterable[int]) -> None:
        self.ops.extend((INSERT, int(x)) for x in xs)

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self) -> Iterator[tuple[str, int]]:
        return iter(self.ops)

    def prefix(self, m: int) -> StreamLog:
        return StreamLog(self.ops[:m])

    def inserted_keys(self) -> list[int]:
        return [x for op, x in self.ops if op == INSERT]

    def to_lines(self, w: int) -> list[str]:
        digits = (w + 3) // 4
        return [("-" if op == DELETE else "") + format(x, f"0{digits}x") for op, x in self.ops]

    def to_text(self, w: int) -> str:
        lines = self.to_lines(w)
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_lines(cls, lines: Iterable[str], w: int) -> StreamLog:
        """Parse lowercase-hex keys, one per line, ``-`` marking a delete.

        Raises ParameterError naming the 1-based line number of a bad line.
        """
        ops = []
        for lineno, raw in enumerate(lines, 1):
            line = raw.rstrip("\n").rstrip("\r")
            op = INSERT
            if line.startswith("-"):
                op, line = DELETE, line[1:]
            if not line or any(c not in "0123456789abcdef" for c in line):
                raise ParameterError(f"line {lineno}: expected lowercase hex key, got {raw.rstrip()!r}")
            x = int(line, 16)
            if x >> w:
                raise ParameterError(f"line {lineno}: key {line} wider than {w} bits")
            ops.append((op, x))
        return cls(ops)


def live_set(log: StreamLog) -> set[int]:
    s: set[int] = set()
    for op, x in log:
        if op == INSERT:
            s.add(x)
        else:
            s.discard(x)
    return s


def exact_member(log: StreamLog, x: int) -> bool:
    return int(x) in live_set(log)


def exact_multiset(log: StreamLog) -> Counter:
    """Live multiplicities: inserts add one, deletes remove one."""
    c: Counter = Counter()
    for op, x in log:
        if op == INSERT:
            c[x] += 1
        elif c[x] > 0:
            c[x] -= 1
            if c[x] == 0:
                del c[x]
    return c


def entry_level(position: int, i0: int) -> int:
    """Level of the subsequence containing insert number ``position`` (1-based)."""
    return max(i0, position.bit_length())


def element_records(params: HashParams, x: int, entry: int, i: int) -> list[tuple[int, int]]:
    """Records an element that entered at level ``entry`` owns at level ``i``.

    The element's true prefix has ``tp = ell_entry + min(r, ell - ell_entry)``
    bits.  While ``ell_i <= tp`` it owns one record whose buffer is the true
    bits from ``ell_i`` to ``tp``.  Past that every extension of the true
    prefix to ``ell_i`` bits is present with an empty buffer.
    """
    if i < entry:
        raise ParameterError(f"level {i} precedes the element's entry level {entry}")
    ell = params.ell
    sig = params.full(x)
    l_entry = params.level_bits(entry)
    l_i = params.level_bits(i)
    tp = l_entry + min(params.r, ell - l_entry)
    if l_i <= tp:
        k = tp - l_i
        bits = (sig >> (ell - tp)) & ((1 << k) - 1)
        return [(sig >> (ell - l_i), (1 << k) | bits)]
    base = (sig >> (ell - tp)) << (l_i - tp)
    return [(base | s, 1) for s in range(1 << (l_i - tp))]


def reference_records(log: StreamLog, params: HashParams, config, i: int) -> set[tuple[int, int]]:
    """The growable filter's record set at level ``i`` after the logged inserts.

    ``config`` is a GrowConfig or just its ``i0``.
    """
    i0 = config if isinstance(config, int) else config.i0
    out: set[tuple[int, int]] = set()
    position = 0
    for op, x in log:
        if op != INSERT:
            raise ParameterError("reference records are defined for insert-only streams")
        position += 1
        out.update(element_records(params, x, entry_level(position, i0), i))
    return out


def reference_count_bound(sizes: dict[int, int], i: int, r: int) -> int:
    """Record count before duplicate collapse, from subsequence sizes ``{level: |S_j|}``."""
    return sum(s << (i - j - r) if j <= i - r else s for j, s in sizes.items())
