import numpy as np

from ctlkit import io as dio
from ctlkit.bench import bench_retrieval, write_bench_csv


def test_candidate_and_storage_ratio_exact():
    ds = dio.generate_synthetic(50, 21, 8, 0.1, 2, seed=0)
    report = bench_retrieval(ds, repeats=3)
    inst = report.modes["instance"]
    cent = report.modes["centroid"]
    assert inst.candidates == 50 * 20
    assert cent.candidates == 50
    assert cent.candidates / inst.candidates == 1 / 20
    assert cent.payload_bytes / inst.payload_bytes == 1 / 20
    assert inst.payload_bytes == 50 * 20 * 8 * 4


def test_centroid_faster_when_many_instances_per_class():
    ds = dio.generate_synthetic(40, 21, 16, 0.1, 2, seed=1)
    report = bench_retrieval(ds, repeats=3)
    inst = report.modes["instance"]
    cent = report.modes["centroid"]
    assert cent.eval_seconds < inst.eval_seconds


def test_repeats_validated():
    ds = dio.generate_synthetic(5, 4, 8, 0.1, 2, seed=2)
    try:
        bench_retrieval(ds, repeats=2)
        assert False, "expected ValueError"
    except ValueError:
        pass


def test_parallel_flag_runs():
    ds = dio.generate_synthetic(10, 5, 8, 0.1, 2, seed=3)
    report = bench_retrieval(ds, repeats=3, parallel=True)
    assert set(report.modes) == {"instance", "centroid"}
    for mb in report.modes.values():
        assert len(mb.repeats) == 3
        assert np.median(mb.repeats) == mb.eval_seconds


def test_csv_output(tmp_path):
    ds = dio.generate_synthetic(6, 4, 8, 0.1, 2, seed=4)
    report = bench_retrieval(ds, repeats=3, name="toy")
    path = tmp_path / "bench.csv"
    write_bench_csv(report, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "dataset,mode,candidates,bytes,seconds"
    assert len(lines) == 3
    fields = lines[1].split(",")
    assert fields[0] == "toy"
    assert fields[1] in ("instance", "centroid")
    int(fields[2]), int(fields[3]), float(fields[4])
