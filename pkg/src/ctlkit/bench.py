"""Storage and wall-clock comparison of instance vs centroid retrieval.

Timing methodology: monotonic clock, one discarded warm-up pass, median
of >= 3 repeats. Storage is computed exactly from the binary format, not
measured. Index build time is reported separately and excluded from the
per-query evaluation time.
"""

import time
from dataclasses import dataclass

import numpy as np

from .backend import kernels
from .io import binary_file_bytes, vector_payload_bytes
from .retrieval import build_centroid_index, build_instance_index

__all__ = ["ModeBench", "BenchReport", "bench_retrieval", "write_bench_csv"]


@dataclass
class ModeBench:
    mode: str
    candidates: int
    payload_bytes: int     # float32 vector payload only
    file_bytes: int        # full binary-format file size
    build_seconds: float
    eval_seconds: float    # median over repeats
    repeats: list


@dataclass
class BenchReport:
    dataset: str
    num_queries: int
    dim: int
    modes: dict  # mode name -> ModeBench


def _time_queries(vectors, queries, parallel):
    """Score + rank every query against the candidate matrix."""
    start = time.monotonic()
    if parallel:
        scores = queries @ vectors.T
        np.argsort(-scores, axis=1, kind="stable")
    else:
        for q in queries:
            scores = kernels.matvec_scores(vectors, q)
            np.argsort(-scores, kind="stable")
    return time.monotonic() - start


def bench_retrieval(ds, modes=("instance", "centroid"), repeats=3,
                    parallel=False, name="dataset"):
    """Benchmark retrieval over all queries of `ds` for each mode."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    query_rows = ds.split_rows("query")
    queries = ds.vectors[query_rows].astype(np.float64)
    norms = np.linalg.norm(queries, axis=1, keepdims=True)
    queries = queries / norms

    report = BenchReport(dataset=name, num_queries=len(query_rows),
                         dim=ds.dim, modes={})
    for mode in modes:
        t0 = time.monotonic()
        if mode == "instance":
            index = build_instance_index(ds)
        elif mode == "centroid":
            index = build_centroid_index(ds)
        else:
            raise ValueError(f"unknown mode: {mode!r}")
        build_s = time.monotonic() - t0

        n = index.num_candidates
        _time_queries(index.vectors, queries, parallel)  # warm-up
        times = [_time_queries(index.vectors, queries, parallel)
                 for _ in range(repeats)]
        report.modes[mode] = ModeBench(
            mode=mode,
            candidates=n,
            payload_bytes=vector_payload_bytes(n, ds.dim),
            file_bytes=binary_file_bytes(n, ds.dim),
            build_seconds=build_s,
            eval_seconds=float(np.median(times)),
            repeats=times,
        )
    return report


def write_bench_csv(report, path):
    """Plot-ready CSV: dataset, mode, candidates, bytes, seconds."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dataset,mode,candidates,bytes,seconds\n")
        for mode, mb in report.modes.items():
            fh.write(f"{report.dataset},{mode},{mb.candidates},"
                     f"{mb.payload_bytes},{mb.eval_seconds:.6f}\n")
