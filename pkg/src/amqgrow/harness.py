"""Measurement harness: FPR, space curves, probe benchmarks and stream verification.

Every run is a pure function of its :class:`RunSpec`.  Seeds for filters,
streams and queries are derived from ``spec.seed`` and the trial index, and
wall-clock columns are filled only when ``timing`` is on, so repeated runs
write byte-identical CSV.
"""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .chain import ChainFilter
from .deamortized import DeamortizedFilter
from .deletions import DeletionFilter
from .errors import ParameterError
from .grow import BucketedGrowFilter, GrowConfig, GrowFilter, hist_stats
from .hashing import child_seed
from .oracle import INSERT, StreamLog, reference_records

VARIANTS = ("chain", "grow", "grow-bucketed", "grow-deamortized", "grow-deletions")
CSV_COLUMNS = ("variant", "epsilon", "w", "seed", "trial", "n", "level", "records", "space_bits",
               "bits_per_element", "fpr", "fpr_stderr", "mean_probes", "p99_probes", "rebuilds",
               "wall_ns_per_op")
MIN_QUERIES = 10_000
QUERY_CHUNK = 1 << 18
RECORD_CHECK_LIMIT = 4096


@dataclass(frozen=True)
class RunSpec:
    variant: str = "grow"
    epsilon: float = 1 / 64
    w: int = 32
    n: int = 1 << 16
    queries: int = 1_000_000
    trials: int = 1
    seed: int = 0
    i0: int = 10
    delta: float = 0.25
    backend: str = "sigset"
    deletions: bool = False
    first_checkpoint: int = 10
    input: str | None = None
    out: str | None = None
    timing: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        if self.deletions and self.variant not in ("grow", "grow-deletions"):
            raise ParameterError(f"deletions cannot be combined with variant {self.variant!r}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        if self.n < 0 or self.queries < 0:
            raise ParameterError("inserts and queries must be non-negative")
        if self.first_checkpoint < 0:
            raise ParameterError("first checkpoint exponent must be >= 0")
        GrowConfig(self.epsilon, self.w, self.i0, self.delta)  # validates the shared fields

    @property
    def effective_variant(self) -> str:
        return "grow-deletions" if self.deletions else self.variant

    def grow_config(self, trial: int) -> GrowConfig:
        return GrowConfig(self.epsilon, self.w, self.i0, self.delta,
                          bucketing=self.effective_variant == "grow-bucketed",
                          seed=child_seed(self.seed, trial, 0))

    def checkpoints(self, total: int) -> list[int]:
        pts = []
        k = self.first_checkpoint
        while (1 << k) <= total:
            pts.append(1 << k)
            k += 1
        if total and (not pts or pts[-1] != total):
            pts.append(total)
        return pts


@dataclass
class RunReport:
    variant: str
    epsilon: float
    w: int
    seed: int
    trial: int | str
    n: int
    level: int
    records: int
    space_bits: int
    bits_per_element: float | None
    fpr: float | None = None
    fpr_stderr: float | None = None
    mean_probes: float | None = None
    p99_probes: float | None = None
    rebuilds: int = 0
    wall_ns_per_op: float | None = None
    actual_space_bits: int | None = field(default=None, repr=False)
    max_fill: float | None = field(default=None, repr=False)

    def csv_row(self) -> list[str]:
        return [_fmt(getattr(self, c)) for c in CSV_COLUMNS]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def make_filter(spec: RunSpec, trial: int = 0):
    """A fresh filter of the run's variant, seeded for ``trial``."""
    v = spec.effective_variant
    if v == "chain":
        return ChainFilter(spec.epsilon, spec.backend, seed=child_seed(spec.seed, trial, 0))
    cfg = spec.grow_config(trial)
    if v == "grow":
        return GrowFilter(cfg)
    if v == "grow-bucketed":
        return BucketedGrowFilter(cfg)
    if v == "grow-deamortized":
        return DeamortizedFilter(cfg)
    return DeletionFilter(cfg)


def filter_dicts(f) -> list:
    if isinstance(f, ChainFilter):
        return f.dicts()
    return f.live_dicts()


def _probe_hist(f) -> np.ndarray | None:
    if isinstance(f, ChainFilter):
        ds = f.dicts()
        return sum(d.probe_hist for d in ds) if ds else None
    if isinstance(f, BucketedGrowFilter):
        return sum(b.probe_hist() for b in f.buckets)
    return f.probe_hist()


def _params_hex(f) -> str:
    p = getattr(f, "params", None)
    return p.to_bytes().hex() if p is not None else "none"


# -- streams ---------------------------------------------------------------------------

def distinct_keys(rng: np.random.Generator, n: int, w: int, avoid: np.ndarray | None = None) -> np.ndarray:
    """``n`` distinct uniform ``w``-bit keys in random order, none of them in ``avoid``."""
    out = np.zeros(0, dtype=np.uint64)
    hi = np.uint64((1 << w) - 1)
    while len(out) < n:
        draw = rng.integers(0, hi, size=n - len(out) + 16, dtype=np.uint64, endpoint=True)
        out = np.concatenate([out, draw])
        _, first = np.unique(out, return_index=True)
        keep = np.zeros(len(out), dtype=bool)
        keep[first] = True
        if avoid is not None and len(avoid):
            keep &= ~np.isin(out, avoid)
        out = out[keep]
    return out[:n]


def insert_stream(spec: RunSpec, trial: int) -> StreamLog:
    rng = np.random.default_rng(child_seed(spec.seed, trial, 1))
    log = StreamLog()
    log.extend_inserts(distinct_keys(rng, spec.n, spec.w).tolist())
    return log


def deletion_stream(n: int, w: int, seed: int) -> StreamLog:
    """Proper insert/delete interleaving with ``n`` inserts of distinct keys.

    Inserts arrive in blocks; after each block a random fraction (up to one
    half) of the live keys is deleted.  Deleted keys are never re-inserted.
    """
    rng = np.random.default_rng(seed)
    keys = distinct_keys(rng, n, w)
    log = StreamLog()
    live: list[int] = []
    at = 0
    max_block = max(1, n // 16)
    while at < n:
        b = int(rng.integers(1, max_block + 1))
        block = keys[at:at + b].tolist()
        log.extend_inserts(block)
        live.extend(block)
        at += len(block)
        frac = float(rng.uniform(0.0, 0.5))
        k = int(frac * len(live))
        if k:
            idx = rng.choice(len(live), size=k, replace=False)
            gone = set(idx.tolist())
            for j in sorted(gone):
                log.delete(live[j])
            live = [x for j, x in enumerate(live) if j not in gone]
    return log


def stream_for(spec: RunSpec, trial: int) -> StreamLog:
    if spec.input is not None:
        return ingest(spec.input, spec.w)
    if spec.effective_variant == "grow-deletions":
        return deletion_stream(spec.n, spec.w, child_seed(spec.seed, trial, 1))
    return insert_stream(spec, trial)


def ingest(path: str, w: int) -> StreamLog:
    """Read a key file: lowercase hex per line, ``-`` prefix for deletes."""
    with open(path, encoding="ascii", errors="strict", newline="") as fh:
        return StreamLog.from_lines(fh, w)


def _batches(log: StreamLog) -> Iterable[tuple[str, np.ndarray, int]]:
    """Maximal runs of one op type as arrays, with the op count after each run."""
    ops = log.ops
    i = 0
    while i < len(ops):
        j = i
        while j < len(ops) and ops[j][0] == ops[i][0]:
            j += 1
        yield ops[i][0], np.array([x for _, x in ops[i:j]], dtype=np.uint64), j
        i = j


def apply_batch(f, op: str, keys: np.ndarray) -> None:
    if op == INSERT:
        f.insert_many(keys)
    elif hasattr(f, "delete_many"):
        f.delete_many(keys)
    else:
        raise ParameterError(f"variant {getattr(f, 'variant', '?')} does not support deletions")


def replay(f, log: StreamLog, stops: Iterable[int] = (), on_stop: Callable[[int], None] | None = None) -> None:
    """Apply ``log`` to ``f`` in op-type batches, splitting at each op count in ``stops``."""
    stops = sorted(set(stops))
    done = 0
    for op, keys, end in _batches(log):
        start = end - len(keys)
        cuts = [s for s in stops if start < s < end] + [end]
        prev = start
        for c in cuts:
            apply_batch(f, op, keys[prev - start:c - start])
            prev = c
            done = c
            if on_stop is not None and c in stops:
                on_stop(c)
    if on_stop is not None and done == 0 and 0 in stops:
        on_stop(0)


# -- fpr -----------------------------------------------------------------------------------

def _negatives(rng: np.random.Generator, q: int, w: int, live: np.ndarray) -> np.ndarray:
    return distinct_keys(rng, q, w, avoid=live) if q <= (1 << w) // 4 else _negatives_small(rng, q, w, live)


def _negatives_small(rng, q, w, live):
    hi = np.uint64((1 << w) - 1)
    out = np.zeros(0, dtype=np.uint64)
    while len(out) < q:
        d = rng.integers(0, hi, size=q - len(out), dtype=np.uint64, endpoint=True)
        out = np.concatenate([out, d[~np.isin(d, live)]])
    return out


def _fpr_trial(spec: RunSpec, trial: int) -> tuple[RunReport, int, str]:
    log = stream_for(spec, trial)
    f = make_filter(spec, trial)
    t0 = time.perf_counter_ns()
    replay(f, log)
    t_ins = time.perf_counter_ns() - t0
    live = np.array(sorted(_live(log)), dtype=np.uint64)
    rng = np.random.default_rng(child_seed(spec.seed, trial, 2))
    before = _probe_hist(f)
    before = None if before is None else before.copy()
    hits = 0
    t0 = time.perf_counter_ns()
    left = spec.queries
    while left > 0:
        q = _negatives(rng, min(left, QUERY_CHUNK), spec.w, live)
        hits += int(np.count_nonzero(f.member_many(q)))
        left -= len(q)
    t_q = time.perf_counter_ns() - t0
    after = _probe_hist(f)
    mean_p, p99, qhist = None, None, None
    if after is not None:
        qhist = after - before
        mean_p, p99 = hist_stats(qhist)
    fpr = hits / spec.queries if spec.queries else 0.0
    ops = len(log) + spec.queries
    row = _row(spec, f, trial, len(live))
    row.fpr = fpr
    row.fpr_stderr = math.sqrt(fpr * (1 - fpr) / spec.queries) if spec.queries else 0.0
    row.mean_probes, row.p99_probes = mean_p, p99
    if spec.timing and ops:
        row.wall_ns_per_op = (t_ins + t_q) / ops
    return row, hits, _params_hex(f), qhist


def _live(log: StreamLog) -> set[int]:
    s: set[int] = set()
    for op, x in log:
        if op == INSERT:
            s.add(x)
        else:
            s.discard(x)
    return s


def _row(spec: RunSpec, f, trial, n: int) -> RunReport:
    space = f.space_bits()
    row = RunReport(spec.effective_variant, spec.epsilon, spec.w, spec.seed, trial, n, f.level,
                    f.record_count(), space, space / n if n else None, rebuilds=f.rebuilds if hasattr(f, "rebuilds") else 0)
    if isinstance(f, BucketedGrowFilter):
        row.actual_space_bits = f.actual_space_bits()
    row.max_fill = max_fill(f)
    return row


def max_fill(f) -> float:
    """Largest record count seen in any live dictionary, over 2^(level+2)."""
    if isinstance(f, ChainFilter):
        if f.backend == "bloom":
            return None
        i0 = f.initial_level
        return max((lvl.record_count() / (1 << (i0 + j + 2)) for j, lvl in enumerate(f.levels)), default=0.0)
    return f.max_fill


def _map_trials(fn, spec: RunSpec) -> list:
    if spec.jobs > 1 and spec.trials > 1:
        with ProcessPoolExecutor(max_workers=min(spec.jobs, spec.trials)) as ex:
            return list(ex.map(fn, [spec] * spec.trials, range(spec.trials)))
    return [fn(spec, t) for t in range(spec.trials)]


@dataclass
class RunResult:
    spec: RunSpec
    rows: list[RunReport]
    params: list[str]

    def to_csv(self) -> str:
        return write_csv(self.spec, self.rows, self.params)


def run_fpr(spec: RunSpec) -> RunResult:
    """Per-trial and pooled false-positive rate over fresh true negatives."""
    if spec.queries and spec.queries < MIN_QUERIES:
        raise ParameterError(f"FPR runs need at least {MIN_QUERIES} queries")
    out = _map_trials(_fpr_trial, spec)
    rows = [o[0] for o in out]
    total_q = spec.queries * spec.trials
    hits = sum(o[1] for o in out)
    pooled = replace(rows[-1], trial="pooled", n=rows[-1].n, wall_ns_per_op=None)
    pooled.fpr = hits / total_q if total_q else 0.0
    pooled.fpr_stderr = math.sqrt(pooled.fpr * (1 - pooled.fpr) / total_q) if total_q else 0.0
    hists = [o[3] for o in out if o[3] is not None]
    if hists:
        pooled.mean_probes, pooled.p99_probes = hist_stats(sum(hists))
    if spec.timing:
        walls = [r.wall_ns_per_op for r in rows if r.wall_ns_per_op is not None]
        pooled.wall_ns_per_op = sum(walls) / len(walls) if walls else None
    rows.append(pooled)
    return RunResult(spec, rows, [o[2] for o in out])


def fpr_bound(epsilon: float, queries: int) -> float:
    """Acceptance bound 1.1 eps + 3 sqrt(eps / Q)."""
    return 1.1 * epsilon + 3.0 * math.sqrt(epsilon / queries)


# -- space -----------------------------------------------------------------------------------

def _space_trial(spec: RunSpec, trial: int) -> tuple[list[RunReport], str]:
    log = stream_for(spec, trial)
    f = make_filter(spec, trial)
    rows: list[RunReport] = []
    live = 0
    clock = [time.perf_counter_ns(), 0]

    def stop(count: int) -> None:
        nonlocal live
        live = len(_live(log.prefix(count))) if spec.effective_variant == "grow-deletions" else count
        row = _row(spec, f, trial, live)
        now = time.perf_counter_ns()
        if spec.timing:
            row.wall_ns_per_op = (now - clock[0]) / max(1, count - clock[1])
        clock[0], clock[1] = now, count
        rows.append(row)

    replay(f, log, spec.checkpoints(len(log)), stop)
    return rows, _params_hex(f)


def run_space(spec: RunSpec) -> RunResult:
    """Space and bits per element at power-of-two checkpoints."""
    out = _map_trials(_space_trial, spec)
    return RunResult(spec, [r for rows, _ in out for r in rows], [p for _, p in out])


def space_budget(n: int, epsilon: float, factor: float = 4.0) -> float:
    """factor * n * (log2(1/eps) + log2 log2 n + 3)."""
    return factor * n * (math.log2(1 / epsilon) + math.log2(math.log2(n)) + 3)


# -- bench ----------------------------------------------------------------------------------

def _bench_trial(spec: RunSpec, trial: int) -> tuple[RunReport, str]:
    log = stream_for(spec, trial)
    f = make_filter(spec, trial)
    t0 = time.perf_counter_ns()
    replay(f, log)
    t_ins = time.perf_counter_ns() - t0
    rng = np.random.default_rng(child_seed(spec.seed, trial, 3))
    keys = np.array(log.inserted_keys(), dtype=np.uint64)
    q = min(spec.queries, 100_000)
    probe = rng.integers(0, 1 << spec.w, size=q, dtype=np.uint64) if q else np.zeros(0, dtype=np.uint64)
    if len(keys) and q:
        probe[: q // 2] = keys[rng.integers(0, len(keys), size=q // 2)]
    before = _probe_hist(f)
    before = None if before is None else before.copy()
    t0 = time.perf_counter_ns()
    for x in probe.tolist():
        f.member(x)
    t_q = time.perf_counter_ns() - t0
    row = _row(spec, f, trial, len(_live(log)))
    after = _probe_hist(f)
    if after is not None:
        row.mean_probes, row.p99_probes = hist_stats(after - before)
    if spec.timing and (len(log) + q):
        row.wall_ns_per_op = (t_ins + t_q) / (len(log) + q)
    return row, _params_hex(f)


def bench(spec: RunSpec) -> RunResult:
    """Slot-probe statistics of single queries (and wall time with ``timing``)."""
    out = _map_trials(_bench_trial, spec)
    return RunResult(spec, [r for r, _ in out], [p for _, p in out])


# -- verify -----------------------------------------------------------------------------------

@dataclass
class Failure:
    kind: str
    key: int | None
    level: int
    at_op: int

    def describe(self) -> str:
        k = "-" if self.key is None else f"{self.key:x}"
        return f"{self.kind}: key={k} level={self.level} after_op={self.at_op}"


@dataclass
class VerifyResult:
    spec: RunSpec
    rows: list[RunReport]
    failures: list[Failure]
    checks: int
    record_checks: int
    params: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_csv(self) -> str:
        return write_csv(self.spec, self.rows, self.params)


def verify_stream(f, log: StreamLog, checkpoints: Iterable[int], check_records: bool = False,
                  inject: Callable[[object, int], None] | None = None, max_failures: int = 10):
    """Replay ``log`` into ``f`` and check it at each checkpoint.

    At every checkpoint every live key must answer Yes.  With
    ``check_records`` (insert-only logs, unbucketed growable filters without
    deletions) the live record set is compared with :func:`reference_records`
    whenever the filter completes a transition.
    Returns (failures, checks, record_checks, [(checkpoint, live count)]).
    """
    failures: list[Failure] = []
    counts = {"checks": 0, "records": 0}
    live: set[int] = set()
    snapshots: list[tuple[int, int]] = []

    def on_transition(g) -> None:
        if len(failures) >= max_failures:
            return
        counts["records"] += 1
        got = g.record_set()
        want = reference_records(log.prefix(g.n), g.params, g.config, g.level)
        if got != want:
            bad = sorted(got ^ want)[0]
            failures.append(Failure("record-mismatch", bad[0], g.level, g.n))

    hooked = check_records and isinstance(f, GrowFilter) and not isinstance(f, DeletionFilter)
    if hooked:
        f.on_transition.append(on_transition)
    stops = sorted(set(checkpoints))
    try:
        for op, keys, end in _batches(log):
            start = end - len(keys)
            prev = start
            for c in [s for s in stops if start < s < end] + [end]:
                part = keys[prev - start:c - start]
                apply_batch(f, op, part)
                if op == INSERT:
                    live.update(part.tolist())
                else:
                    live.difference_update(part.tolist())
                prev = c
                if inject is not None:
                    inject(f, c)
                if c in stops:
                    counts["checks"] += 1
                    arr = np.fromiter(live, dtype=np.uint64, count=len(live))
                    hit = f.member_many(arr) if len(arr) else np.zeros(0, dtype=bool)
                    for x in arr[~hit][:max(0, max_failures - len(failures))].tolist():
                        failures.append(Failure("false-negative", int(x), f.level, c))
                    snapshots.append((c, len(live)))
            if len(failures) >= max_failures:
                break
    finally:
        if hooked:
            f.on_transition.remove(on_transition)
    return failures, counts["checks"], counts["records"], snapshots


def _verify_trial(spec: RunSpec, trial: int):
    log = stream_for(spec, trial)
    f = make_filter(spec, trial)
    check = (len(log) <= RECORD_CHECK_LIMIT and spec.effective_variant in ("grow", "grow-deamortized")
             and all(op == INSERT for op, _ in log))
    pts = sorted(set(spec.checkpoints(len(log))) | {1 << k for k in range(len(log).bit_length())} | {len(log)})
    failures, checks, rchecks, snaps = verify_stream(f, log, pts, check_records=check)
    row = _row(spec, f, trial, snaps[-1][1] if snaps else 0)
    return row, failures, checks, rchecks, _params_hex(f)


def run_verify(spec: RunSpec) -> VerifyResult:
    """Zero false negatives at every checkpoint, and record-set equality for small streams."""
    out = _map_trials(_verify_trial, spec)
    fails = [f for _, fs, _, _, _ in out for f in fs]
    return VerifyResult(spec, [r for r, *_ in out], fails, sum(o[2] for o in out), sum(o[3] for o in out),
                        [o[4] for o in out])


# -- csv --------------------------------------------------------------------------------------

def spec_metadata(spec: RunSpec) -> str:
    d = asdict(spec)
    d.pop("out", None)
    d.pop("jobs", None)
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def write_csv(spec: RunSpec, rows: list[RunReport], params: list[str]) -> str:
    buf = io.StringIO()
    buf.write("# amqgrow run\n")
    buf.write(f"# spec {spec_metadata(spec)}\n")
    for t, p in enumerate(params):
        buf.write(f"# hash_params trial={t} {p}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.csv_row())
    return buf.getvalue()


def read_csv_rows(text: str) -> list[dict[str, str]]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))
