import numpy as np
import pytest

from amqgrow import cli, harness
from amqgrow.errors import InvariantError, ParameterError
from amqgrow.grow import GrowFilter
from amqgrow.harness import RunSpec, deletion_stream, make_filter, read_csv_rows, verify_stream
from amqgrow.oracle import INSERT


def test_spec_validation():
    with pytest.raises(ParameterError):
        RunSpec(variant="cuckoo")
    with pytest.raises(ParameterError):
        RunSpec(variant="grow-deamortized", deletions=True)
    with pytest.raises(ParameterError):
        RunSpec(trials=0)
    assert RunSpec(deletions=True).effective_variant == "grow-deletions"


def test_checkpoints():
    assert RunSpec(first_checkpoint=3).checkpoints(20) == [8, 16, 20]
    assert RunSpec(first_checkpoint=3).checkpoints(16) == [8, 16]


def test_deletion_stream_is_proper():
    log = deletion_stream(3000, 32, 5)
    live = set()
    seen = set()
    for op, x in log:
        if op == INSERT:
            assert x not in seen
            seen.add(x)
            live.add(x)
        else:
            assert x in live
            live.remove(x)
    assert len(seen) == 3000 and len(log) > 3000


@pytest.mark.parametrize("variant", harness.VARIANTS)
def test_verify_all_variants(variant):
    res = harness.run_verify(RunSpec(variant=variant, n=3000, i0=2, seed=1, first_checkpoint=6))
    assert res.passed and res.checks > 0


def test_verify_checks_records_on_small_streams():
    res = harness.run_verify(RunSpec(n=2000, i0=1, seed=4))
    assert res.passed and res.record_checks == 10


def test_fault_injection_reports_key():
    spec = RunSpec(n=2000, i0=1, seed=2)
    log = harness.stream_for(spec, 0)
    f = make_filter(spec, 0)
    victim = {}

    def drop(g, at):
        if at == 1024 and not victim:
            keys, sats = g.dict.records()
            g.dict.remove(int(keys[0]), int(sats[0]))
            victim["key"] = int(keys[0])

    fails, *_ = verify_stream(f, log, [1024, 2000], check_records=True, inject=drop)
    assert fails and victim
    assert any(x.kind == "false-negative" for x in fails)
    fns = [x for x in fails if x.kind == "false-negative"]
    # every reported key maps onto the dropped record
    assert all(f.params.prefix(x.key, x.level) == victim["key"] for x in fns)
    assert fns[0].at_op == 1024
    assert f"key={fns[0].key:x}" in fns[0].describe()


def test_fpr_run_rows():
    res = harness.run_fpr(RunSpec(n=2048, queries=20_000, trials=2, seed=3))
    rows = read_csv_rows(res.to_csv())
    assert [r["trial"] for r in rows] == ["0", "1", "pooled"]
    assert all(r["wall_ns_per_op"] == "" for r in rows)
    assert float(rows[-1]["fpr"]) < 0.05
    with pytest.raises(ParameterError):
        harness.run_fpr(RunSpec(queries=100))


def test_space_run_rows_and_bucketed_actual():
    res = harness.run_space(RunSpec(variant="grow-bucketed", w=16, n=5000, first_checkpoint=10))
    assert [r.n for r in res.rows] == [1024, 2048, 4096, 5000]
    assert all(r.space_bits >= r.actual_space_bits for r in res.rows)


@pytest.mark.parametrize("cmd", ["fpr", "space", "bench", "verify"])
def test_csv_deterministic(cmd, tmp_path):
    argv = [cmd, "--inserts", "3000", "--queries", "10000", "--trials", "2", "--seed", "9", "--i0", "3",
            "--first-checkpoint", "8"]
    outs = []
    for k in range(2):
        path = tmp_path / f"{k}.csv"
        assert cli.run(argv + ["--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].startswith(b"# amqgrow run\n# spec ")
    assert b"# hash_params trial=1 " in outs[0]


def test_parallel_trials_match_serial(tmp_path):
    base = ["fpr", "--inserts", "2000", "--queries", "10000", "--trials", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(base + ["--out", str(a)]) == 0
    assert cli.run(base + ["--jobs", "3", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_timing_flag_fills_wall_column(tmp_path):
    out = tmp_path / "t.csv"
    assert cli.run(["bench", "--inserts", "1000", "--queries", "2000", "--timing", "--out", str(out)]) == 0
    row = read_csv_rows(out.read_text())[0]
    assert float(row["wall_ns_per_op"]) > 0


def test_cli_config_errors(tmp_path, capsys):
    assert cli.run(["fpr", "--variant", "grow-deamortized", "--deletions"]) == 2
    assert cli.run(["fpr", "--epsilon", "1.5"]) == 2
    bad = tmp_path / "keys.txt"
    bad.write_text("00ff\n12xz\n")
    assert cli.run(["verify", "--input", str(bad), "--universe-bits", "16"]) == 2
    assert "line 2:" in capsys.readouterr().err
    assert cli.run(["verify", "--input", str(tmp_path / "missing.txt")]) == 2


def test_cli_ingest_and_verify(tmp_path):
    log = deletion_stream(2000, 32, 1)
    path = tmp_path / "s.txt"
    path.write_text(log.to_text(32))
    assert cli.run(["verify", "--deletions", "--input", str(path), "--out", str(tmp_path / "o.csv")]) == 0
    assert cli.run(["verify", "--input", str(path), "--out", str(tmp_path / "o2.csv")]) == 2


class Leaky(GrowFilter):
    """Forgets every 97th key."""

    def insert_many(self, xs):
        xs = np.asarray(xs, dtype=np.uint64)
        keep = np.ones(len(xs), dtype=bool)
        keep[::97] = False
        super().insert_many(xs[keep])


def test_cli_property_failure_exit(monkeypatch, tmp_path, capsys):
    monkeypatch.setattr(harness, "make_filter", lambda spec, trial=0: Leaky(spec.grow_config(trial)))
    assert cli.run(["verify", "--inserts", "500", "--out", str(tmp_path / "x.csv")]) == 1
    assert "false-negative: key=" in capsys.readouterr().err


def test_cli_internal_error_exit(monkeypatch, capsys):
    def boom(spec):
        raise InvariantError("broken")
    monkeypatch.setattr(harness, "run_fpr", boom)
    assert cli.run(["fpr"]) == 3
    assert "InvariantError" in capsys.readouterr().err
