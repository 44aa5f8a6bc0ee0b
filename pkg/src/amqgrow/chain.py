"""Chain of fixed filters: level i holds 2**i elements at rate (6/pi^2) eps / i^2.

The per-level rates sum to at most eps, so querying every level and answering
Yes if any does keeps the overall false-positive rate within eps.  Queries
cost one sub-filter lookup per level.
"""
from __future__ import annotations

import math

import numpy as np

from .amq_fixed import AmqConfig, amq_new
from .errors import ParameterError
from .hashing import child_seed

BASEL = 6.0 / math.pi ** 2


def chain_epsilon_at(epsilon: float, i: int) -> float:
    if i < 1:
        raise ParameterError(f"level must be >= 1, got {i}")
    return BASEL * epsilon / (i * i)


class ChainFilter:
    """Append-only list of fixed AMQs with capacities 2, 4, 8, ...

    ``initial_level`` lets the first level start larger (capacity
    ``2**initial_level``) for a warm start; it defaults to 1.
    """

    variant = "chain"

    def __init__(self, epsilon: float, backend: str = "sigset", seed: int = 0, initial_level: int = 1):
        if not 0.0 < epsilon < 1.0:
            raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon!r}")
        if initial_level < 1:
            raise ParameterError("initial_level must be >= 1")
        self.epsilon = epsilon
        self.backend = backend
        self.seed = seed
        self.initial_level = initial_level
        self.levels: list = []
        self.inserted_in_current = 0
        self.n = 0
        self.last_probes = 0
        self.lookups = 0
        self.queries = 0

    # -- structure --------------------------------------------------------------

    @property
    def level(self) -> int:
        return self.initial_level + len(self.levels) - 1 if self.levels else 0

    @property
    def level_count(self) -> int:
        return len(self.levels)

    def _open_level(self) -> None:
        i = self.initial_level + len(self.levels)
        cfg = AmqConfig(1 << i, chain_epsilon_at(self.epsilon, i), self.backend, child_seed(self.seed, i))
        self.levels.append(amq_new(cfg))
        self.inserted_in_current = 0

    def _room(self) -> int:
        if not self.levels:
            return 0
        return self.levels[-1].capacity - self.inserted_in_current

    # -- filter interface -------------------------------------------------------

    def insert(self, x: int) -> None:
        if self._room() == 0:
            self._open_level()
        self.levels[-1].insert(x)
        self.inserted_in_current += 1
        self.n += 1

    def insert_many(self, xs) -> None:
        xs = np.asarray(xs, dtype=np.uint64)
        at = 0
        while at < len(xs):
            if self._room() == 0:
                self._open_level()
            take = min(self._room(), len(xs) - at)
            self.levels[-1].insert_many(xs[at:at + take])
            self.inserted_in_current += take
            self.n += take
            at += take

    def member(self, x: int) -> bool:
        self.queries += 1
        self.last_probes = 0
        hit = False
        # every level is consulted so the probe count is the same for all queries
        for lvl in self.levels:
            self.last_probes += 1
            hit = lvl.member(x) or hit
        self.lookups += self.last_probes
        return hit

    def member_many(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.uint64)
        out = np.zeros(len(xs), dtype=bool)
        for lvl in self.levels:
            out |= lvl.member_many(xs)
        self.queries += len(xs)
        self.lookups += len(xs) * len(self.levels)
        self.last_probes = len(self.levels)
        return out

    def __contains__(self, x: int) -> bool:
        return self.member(x)

    def space_bits(self) -> int:
        return sum(lvl.space_bits() for lvl in self.levels)

    def record_count(self) -> int:
        return sum(lvl.record_count() for lvl in self.levels)

    def dicts(self) -> list:
        return [lvl.dict for lvl in self.levels if hasattr(lvl, "dict")]

    def level_budgets(self) -> list[tuple[int, float]]:
        return [(lvl.capacity, lvl.config.epsilon) for lvl in self.levels]

    @staticmethod
    def levels_for(n: int, initial_level: int = 1) -> int:
        """Number of levels after ``n`` inserts."""
        count, total = 0, 0
        while total < n:
            total += 1 << (initial_level + count)
            count += 1
        return count
