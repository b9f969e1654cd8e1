import random

from chopchop.batch import verify_batch
from chopchop.harness.bench import bench_verify, build_batch, make_fixture, time_verify
from chopchop.harness.cli import main


def test_bench_batches_verify():
    fx = make_fixture(64, "mock")
    rng = random.Random(0)
    for phi in (0.0, 0.1, 0.5, 1.0):
        b = build_batch(fx, 64, phi, rng)
        assert len(b.stragglers) == round(phi * 64)
        assert verify_batch(fx.scheme, b, fx.directory).ok


def test_real_bench_batches_verify():
    fx = make_fixture(16, "real")
    rng = random.Random(1)
    for phi in (0.0, 0.25, 1.0):
        assert verify_batch(fx.scheme, build_batch(fx, 16, phi, rng), fx.directory).ok


def test_cost_monotone_in_stragglers():
    # mock crypto: verification cost is dominated by per-straggler checks
    rows = bench_verify((2048,), (0.0, 0.5, 1.0), crypto="mock", repeats=3)
    secs = [r["seconds"] for r in rows]
    assert secs[0] < secs[1] < secs[2]
    assert rows[0]["relative_to_distilled"] == 1.0


def test_real_cost_monotone():
    rows = bench_verify((512,), (0.0, 0.5, 1.0), crypto="real", repeats=2)
    secs = [r["seconds"] for r in rows]
    assert secs[0] < secs[1] < secs[2]


def test_batch_of_one_no_amortization():
    fx = make_fixture(1, "real")
    rng = random.Random(2)
    distilled = time_verify(fx, build_batch(fx, 1, 0.0, rng), repeats=5)
    classic = time_verify(fx, build_batch(fx, 1, 1.0, rng), repeats=5)
    ratio = max(distilled, classic) / min(distilled, classic)
    assert ratio <= 2.0, f"distilled {distilled * 1e3:.3f} ms vs classic {classic * 1e3:.3f} ms"


def test_cli_bench_writes_csv(tmp_path, capsys):
    assert main(["bench", "--batch-size", "32,64", "--straggler-frac", "0,1", "--crypto", "mock",
                 "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert lines[0].startswith("batch_size,straggler_frac,seconds")
    assert len(lines) == 5
