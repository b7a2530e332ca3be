import os
import subprocess
import sys

import pytest
from hypothesis import given, settings, strategies as st

from dynkmeans.errors import UsageError
from dynkmeans.harness import METRICS_COLUMNS, run_stream
from dynkmeans.params import Params
from dynkmeans.workload import UpdateStream, gen_workload

P = Params(epsilon=0.5, d=2, delta=64, seed=71)


def fake_clock():
    state = [0]

    def clock():
        state[0] += 1000
        return state[0]
    return clock


def test_gen_empty():
    stream = gen_workload("uniform", 0, 2, 64, 3, seed=1)
    assert stream.records == []


def test_gen_pure_insertions():
    stream = gen_workload("uniform", 50, 2, 64, 3, ins_frac=1.0, seed=2)
    assert all(r[0] == "I" for r in stream.records)
    live = {r[1] for r in stream.records}
    assert len(live) == 50


def test_gen_sliding_window_live_bound():
    w = 20
    stream = gen_workload("sliding-window", 200, 2, 64, 3, seed=3, window=w)
    live = set()
    for rec in stream.records:
        if rec[0] == "I":
            live.add(rec[1])
        else:
            live.discard(rec[1])
        assert len(live) <= w + 1


def test_gen_deterministic():
    a = gen_workload("clustered", 100, 2, 64, 4, seed=9)
    b = gen_workload("clustered", 100, 2, 64, 4, seed=9)
    assert a.serialize() == b.serialize()


def test_gen_bad_spec():
    with pytest.raises(UsageError):
        gen_workload("nope", 10, 2, 64, 3)
    with pytest.raises(UsageError):
        gen_workload("uniform", -1, 2, 64, 3)


def test_stream_round_trip_byte_exact():
    stream = gen_workload("clustered", 120, 3, 32, 4, ins_frac=0.6, seed=4)
    text = stream.serialize()
    again = UpdateStream.parse(text)
    assert again.serialize() == text


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 16), st.integers(1, 16)), max_size=25),
       st.integers(0, 2 ** 31))
def test_stream_round_trip_property(points, seed):
    stream = UpdateStream(d=2, delta=16, n=len(points), k_hint=2)
    for i, p in enumerate(points):
        stream.records.append(("I", i, 1.0, p))
    text = stream.serialize()
    assert UpdateStream.parse(text).serialize() == text


def test_stream_parse_errors():
    with pytest.raises(UsageError):
        UpdateStream.parse("I 1 1.0 2 2\n")
    with pytest.raises(UsageError):
        UpdateStream.parse("H d=2 delta=16 n=1 k=1\nD 7\n")
    with pytest.raises(UsageError):
        UpdateStream.parse("H d=2 delta=16 n=1 k=1\nI 1 1.0 99 1\n")
    with pytest.raises(UsageError):
        UpdateStream.parse("")


def test_run_stream_insertions_only_ratio_one():
    stream = gen_workload("uniform", 4, 2, 64, 4, ins_frac=1.0, seed=5)
    res = run_stream(stream, P, 4, baseline_every=2, time_source=fake_clock())
    for row in res.rows:
        assert row["ratio"] == 1.0  # solution covers every point, 0/0 -> 1


def test_run_stream_deterministic_files():
    stream = gen_workload("clustered", 150, 2, 64, 4, ins_frac=0.7, seed=6)
    r1 = run_stream(stream, P, 4, baseline_every=50, time_source=fake_clock())
    r2 = run_stream(stream, P, 4, baseline_every=50, time_source=fake_clock())
    assert r1.metrics_csv() == r2.metrics_csv()


def test_metrics_schema_golden():
    assert METRICS_COLUMNS == (
        "update_index", "op_kind", "cost_alg", "cost_baseline", "ratio",
        "recourse_step", "recourse_cum", "makerobust_cum", "resets_cum",
        "time_us", "n_live", "epoch_len")
    stream = gen_workload("uniform", 5, 2, 64, 2, ins_frac=1.0, seed=7)
    res = run_stream(stream, P, 2, time_source=fake_clock())
    header = res.metrics_csv().splitlines()[0]
    assert header == ",".join(METRICS_COLUMNS)


def test_run_stream_direct_vs_sparsified_comparable():
    stream = gen_workload("clustered", 150, 2, 64, 3, ins_frac=0.8, seed=8)
    d = run_stream(stream, P, 3, mode="direct", baseline_every=50,
                   time_source=fake_clock())
    s = run_stream(stream, P, 3, mode="sparsified", baseline_every=50,
                   time_source=fake_clock(), verifiers=2)
    assert d.summary["n_updates"] == s.summary["n_updates"] == 150
    assert "ratio_p50" in d.summary and "ratio_p50" in s.summary
    assert s.summary["resets_total"] >= 0


def test_run_stream_bad_mode():
    stream = gen_workload("uniform", 5, 2, 64, 2, seed=9)
    with pytest.raises(UsageError):
        run_stream(stream, P, 2, mode="warp")


CLI = [sys.executable, "-m", "dynkmeans.cli"]


def test_cli_gen_run_verify(tmp_path):
    stream_path = tmp_path / "s.txt"
    out = subprocess.run(CLI + ["gen", "--mode", "clustered", "--n", "80",
                                "--k", "3", "--delta", "64",
                                "--out", str(stream_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    metrics = tmp_path / "m.csv"
    out = subprocess.run(CLI + ["run", str(stream_path), "--k", "3",
                                "--baseline-every", "40", "--fixed-time",
                                "--out", str(metrics)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert metrics.exists() and metrics.with_suffix(".csv.summary").exists()
    assert "ratio_p50=" in out.stdout
    out = subprocess.run(CLI + ["verify", "--suite", "lemmas"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "PASS lemmas.projection" in out.stdout


def test_cli_verify_injected_failure():
    out = subprocess.run(CLI + ["verify", "--suite", "hashing",
                                "--lambda-cap", "1"],
                         capture_output=True, text=True)
    assert out.returncode == 1
    assert "FAIL" in out.stdout


def test_cli_usage_errors():
    out = subprocess.run(CLI + ["run", "/nonexistent/stream.txt"],
                         capture_output=True, text=True)
    assert out.returncode == 2
    out = subprocess.run(CLI + ["gen", "--mode", "bogus"],
                         capture_output=True, text=True)
    assert out.returncode == 2  # argparse rejects the choice


def test_cli_bench_smoke():
    out = subprocess.run(CLI + ["bench", "--k", "3", "--n-small", "60",
                                "--n-large", "150", "--delta", "64"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "growth_alg=" in out.stdout and "growth_naive=" in out.stdout


def test_cli_jl_and_config(tmp_path):
    stream_path = tmp_path / "s4.txt"
    subprocess.run(CLI + ["gen", "--mode", "clustered", "--n", "60",
                          "--d", "4", "--k", "3", "--delta", "64",
                          "--out", str(stream_path)], check=True)
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("epsilon=0.5\nseed=9\nsched.ell_stop_factor=20\n")
    out = subprocess.run(CLI + ["--config", str(cfg), "run", str(stream_path),
                                "--k", "3", "--jl-dim", "2", "--fixed-time",
                                "--baseline-every", "30"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    out2 = subprocess.run(CLI + ["--config", str(cfg), "run", str(stream_path),
                                 "--k", "3", "--jl-dim", "2", "--fixed-time",
                                 "--baseline-every", "30"],
                          capture_output=True, text=True)
    assert out.stdout == out2.stdout  # projection is seed-deterministic


def test_run_stream_jl_projects_dimension():
    stream = gen_workload("clustered", 80, 5, 64, 3, ins_frac=1.0, seed=12)
    res = run_stream(stream, Params(epsilon=0.5, d=5, delta=64, seed=12), 3,
                     baseline_every=40, time_source=fake_clock(), jl_dim=2)
    assert res.summary["n_updates"] == 80


def test_adversarial_churn_keeps_base_live():
    stream = gen_workload("adversarial-churn", 300, 2, 64, 4, seed=13)
    live = set()
    min_live_after_warmup = 10 ** 9
    for i, rec in enumerate(stream.records):
        if rec[0] == "I":
            live.add(rec[1])
        else:
            live.discard(rec[1])
        if i > 120:
            min_live_after_warmup = min(min_live_after_warmup, len(live))
    assert min_live_after_warmup >= 40  # persistent clustered base remains
