"""Command line entry point: ``amqgrow {fpr,space,bench,verify}``.

Exit codes: 0 success, 1 a verified property failed, 2 bad configuration or
input, 3 an internal invariant broke.
"""
from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import (AllocationError, CapacityError, InvariantError, ParameterError,
                     StaleCursorError, UniverseExhaustedError)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INTERNAL = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="amqgrow", description="Growable approximate membership filters.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("fpr", "measure false-positive rate"),
                        ("space", "space at power-of-two checkpoints"),
                        ("bench", "slot-probe statistics of single queries"),
                        ("verify", "replay a stream and check for false negatives")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--variant", default="grow", choices=harness.VARIANTS)
        p.add_argument("--epsilon", type=float, default=1 / 64)
        p.add_argument("--universe-bits", dest="w", type=int, default=32)
        p.add_argument("--inserts", dest="n", type=int, default=1 << 16)
        p.add_argument("--queries", type=int, default=1_000_000)
        p.add_argument("--trials", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--i0", type=int, default=10)
        p.add_argument("--delta", type=float, default=0.25)
        p.add_argument("--backend", default="sigset", choices=("sigset", "bloom"))
        p.add_argument("--deletions", action="store_true")
        p.add_argument("--input", default=None, help="key file: lowercase hex per line, '-' prefix deletes")
        p.add_argument("--out", default=None, help="CSV path (default stdout)")
        p.add_argument("--first-checkpoint", type=int, default=10, help="log2 of the first checkpoint")
        p.add_argument("--timing", action="store_true", help="fill wall_ns_per_op (output is no longer reproducible)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    return ap


def spec_from_args(a: argparse.Namespace) -> harness.RunSpec:
    return harness.RunSpec(variant=a.variant, epsilon=a.epsilon, w=a.w, n=a.n, queries=a.queries,
                           trials=a.trials, seed=a.seed, i0=a.i0, delta=a.delta, backend=a.backend,
                           deletions=a.deletions, first_checkpoint=a.first_checkpoint, input=a.input,
                           out=a.out, timing=a.timing, jobs=a.jobs)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="ascii", newline="") as fh:
            fh.write(text)


def run(argv: list[str] | None = None) -> int:
    a = build_parser().parse_args(argv)
    try:
        spec = spec_from_args(a)
        if a.command == "fpr":
            res = harness.run_fpr(spec)
        elif a.command == "space":
            res = harness.run_space(spec)
            for r in res.rows:
                if r.actual_space_bits is not None:
                    print(f"trial={r.trial} n={r.n} interleaved_bits={r.space_bits} "
                          f"actual_bits={r.actual_space_bits}", file=sys.stderr)
        elif a.command == "bench":
            res = harness.bench(spec)
        else:
            res = harness.run_verify(spec)
        _emit(res.to_csv(), spec.out)
    except (ParameterError, OSError, UnicodeDecodeError) as e:
        print(f"amqgrow: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvariantError, CapacityError, AllocationError, StaleCursorError, UniverseExhaustedError) as e:
        print(f"amqgrow: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    if a.command == "verify":
        for f in res.failures:
            print(f.describe(), file=sys.stderr)
        print(f"verify: {res.checks} checkpoints, {res.record_checks} record-set checks, "
              f"{len(res.failures)} failures", file=sys.stderr)
        return EXIT_OK if res.passed else EXIT_FAIL
    return EXIT_OK


def main() -> None:
    sys.exit(run())
