"""Retrieval quality metrics: mean average precision and Accuracy@K.

AP is the standard non-interpolated IR definition over the full ranking:
``AP = (1 / R) * sum over relevant hit positions r of (hits_up_to_r / r)``
where R is the total number of relevant targets for the query.
"""

from dataclasses import dataclass

import numpy as np

from .retrieval import (NoEligibleTargetsError, UnjudgeableQueryError,
                        build_centroid_index, build_instance_index,
                        query_topk)

__all__ = [
    "ACC_KS",
    "EvalReport",
    "average_precision",
    "accuracy_at_k",
    "evaluate",
    "write_report",
]

ACC_KS = (1, 5, 10, 20, 50)


@dataclass
class EvalReport:
    mode: str
    cross_view: bool
    mAP: float
    acc_at_k: dict           # K -> fraction in [0, 1]
    num_queries: int         # evaluated
    num_skipped: int         # unjudgeable / filtered out

    def to_table(self):
        lines = [
            f"mode: {self.mode}   cross_view: {self.cross_view}",
            f"queries evaluated: {self.num_queries}   "
            f"skipped: {self.num_skipped}",
            f"{'metric':<10}{'value':>10}",
            f"{'mAP':<10}{self.mAP:>10.4f}",
        ]
        for k in sorted(self.acc_at_k):
            lines.append(f"{f'Acc@{k}':<10}{self.acc_at_k[k]:>10.4f}")
        return "\n".join(lines)

    def to_kv(self):
        lines = [
            f"mode={self.mode}",
            f"cross_view={int(self.cross_view)}",
            f"num_queries={self.num_queries}",
            f"num_skipped={self.num_skipped}",
            f"mAP={self.mAP:.9g}",
        ]
        for k in sorted(self.acc_at_k):
            lines.append(f"acc_at_{k}={self.acc_at_k[k]:.9g}")
        return "\n".join(lines) + "\n"


def average_precision(ranking, num_relevant_total):
    """Non-interpolated AP of one ranking given the true relevant count."""
    if num_relevant_total < 1:
        raise ValueError("num_relevant_total must be >= 1; skip the query")
    hits = 0
    total = 0.0
    for rank, rel in enumerate(ranking.relevant, start=1):
        if rel:
            hits += 1
            total += hits / rank
    return total / num_relevant_total


def accuracy_at_k(ranking, k):
    """1 iff any of the first min(k, len) candidates is relevant."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(bool(np.any(ranking.relevant[:k])))


def evaluate(ds, index=None, mode="instance", cross_view=False):
    """Evaluate all queries of `ds` against an index.

    Instance mode counts all eligible same-class gallery records as
    relevant; centroid mode has exactly one relevant target per query
    (its class centroid). Queries with no relevant target after
    filtering are skipped and counted.
    """
    if mode not in ("instance", "centroid"):
        raise ValueError(f"unknown mode: {mode!r}")
    if index is None:
        index = (build_instance_index(ds) if mode == "instance"
                 else build_centroid_index(ds))
    query_rows = ds.split_rows("query")
    if len(query_rows) == 0:
        raise ValueError("query split is empty")

    ap_sum = 0.0
    acc_sums = {k: 0 for k in ACC_KS}
    evaluated = 0
    skipped = 0
    for row in query_rows:
        rec = ds.record(row)
        try:
            ranking = query_topk(index, rec, k=index.num_candidates,
                                 cross_view=cross_view)
        except (NoEligibleTargetsError, UnjudgeableQueryError):
            skipped += 1
            continue
        num_relevant = int(np.count_nonzero(ranking.relevant))
        if num_relevant == 0:
            skipped += 1
            continue
        ap_sum += average_precision(ranking, num_relevant)
        for k in ACC_KS:
            acc_sums[k] += accuracy_at_k(ranking, k)
        evaluated += 1
    if evaluated == 0:
        raise ValueError("zero evaluable queries")
    return EvalReport(
        mode=mode,
        cross_view=cross_view,
        mAP=ap_sum / evaluated,
        acc_at_k={k: acc_sums[k] / evaluated for k in ACC_KS},
        num_queries=evaluated,
        num_skipped=skipped,
    )


def write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report.to_kv())
