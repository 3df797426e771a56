"""Instance-mode and centroid-mode ranking under cosine similarity.

Centroids are the mean of the raw stored gallery vectors (canonical
ascending-id order), normalized afterwards for scoring. Cross-view
filtering excludes same-camera gallery samples in instance mode; in
centroid mode it swaps in a per-excluded-view centroid variant, built
lazily and cached.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from . import core
from .backend import kernels

__all__ = [
    "RetrievalError",
    "NoEligibleTargetsError",
    "UnjudgeableQueryError",
    "InstanceIndex",
    "CentroidIndex",
    "build_instance_index",
    "build_centroid_index",
    "query_topk",
    "RankingResult",
    "write_rankings",
]


class RetrievalError(Exception):
    pass


class NoEligibleTargetsError(RetrievalError):
    """Index empty, or filtering removed every candidate."""


class UnjudgeableQueryError(RetrievalError):
    """The query's class is absent from the (filtered) centroid index."""


@dataclass
class RankingResult:
    query_id: int
    target_ids: np.ndarray   # record ids (instance) or class ids (centroid)
    scores: np.ndarray       # non-increasing; ties broken by ascending id
    relevant: np.ndarray     # bool, target class == query class


@dataclass
class InstanceIndex:
    ids: np.ndarray
    class_ids: np.ndarray
    view_ids: np.ndarray
    vectors: np.ndarray  # float64, unit rows

    @property
    def num_candidates(self):
        return len(self.ids)


@dataclass
class CentroidIndex:
    class_ids: np.ndarray
    counts: np.ndarray
    vectors: np.ndarray      # float64, unit rows
    raw_centroids: np.ndarray  # float32 means before normalization
    _source: object = None   # Dataset, kept for excluded-view variants
    _variants: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def num_candidates(self):
        return len(self.class_ids)

    def variant_excluding_view(self, view_id):
        """Centroid index rebuilt without gallery samples of one view."""
        with self._lock:
            if view_id not in self._variants:
                if self._source is None:
                    raise RetrievalError(
                        "index has no source dataset for view exclusion")
                self._variants[view_id] = build_centroid_index(
                    self._source, exclude_view=view_id)
            return self._variants[view_id]


def _normalize_rows(vectors, ids_for_error=None):
    v64 = vectors.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", v64, v64))
    bad = np.flatnonzero(norms == 0.0)
    if len(bad):
        which = (int(ids_for_error[bad[0]])
                 if ids_for_error is not None else int(bad[0]))
        raise RetrievalError(f"zero-norm vector for record {which}")
    return v64 / norms[:, None]


def build_instance_index(ds):
    rows = ds.split_rows("gallery")
    if len(rows) == 0:
        raise RetrievalError("gallery split is empty")
    return InstanceIndex(
        ids=ds.ids[rows].copy(),
        class_ids=ds.class_ids[rows].copy(),
        view_ids=ds.view_ids[rows].copy(),
        vectors=_normalize_rows(ds.vectors[rows], ds.ids[rows]),
    )


def build_centroid_index(ds, exclude_view=None):
    """One centroid per class over the gallery split (mean, then
    normalize). With `exclude_view`, samples of that view are omitted and
    classes left empty drop out of the index."""
    class_rows = ds.class_rows("gallery")
    if not class_rows:
        raise RetrievalError("gallery split is empty")
    classes, counts, raw = [], [], []
    for k in sorted(class_rows):
        rows = class_rows[k]
        if exclude_view is not None:
            rows = rows[ds.view_ids[rows] != exclude_view]
        if len(rows) == 0:
            continue
        classes.append(k)
        counts.append(len(rows))
        raw.append(core.mean_vectors(list(ds.vectors[rows])))
    if not classes:
        raise RetrievalError("no classes left after view exclusion")
    raw = np.stack(raw)
    return CentroidIndex(
        class_ids=np.asarray(classes, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        vectors=_normalize_rows(raw, np.asarray(classes)),
        raw_centroids=raw,
        _source=None if exclude_view is not None else ds,
    )


def _rank(target_ids, scores, relevant, k, query_id):
    order = np.lexsort((target_ids, -scores))[:k]
    return RankingResult(
        query_id=query_id,
        target_ids=target_ids[order],
        scores=scores[order],
        relevant=relevant[order],
    )


def query_topk(index, query, k, cross_view=False):
    """Exhaustive cosine ranking of `query` against an index.

    Ties are broken by ascending target id. Raises
    NoEligibleTargetsError when filtering leaves no candidates and
    UnjudgeableQueryError when a centroid query's class is absent.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    q = core.as_vector(query.vector).astype(np.float64)
    norm = np.sqrt(q @ q)
    if norm == 0.0:
        raise RetrievalError(f"zero-norm query vector {query.id}")
    q /= norm

    if isinstance(index, InstanceIndex):
        mask = np.ones(index.num_candidates, dtype=bool)
        if cross_view:
            mask = index.view_ids != query.view_id
        if not mask.any():
            raise NoEligibleTargetsError(
                f"no gallery candidates for query {query.id}")
        ids = index.ids[mask]
        scores = kernels.matvec_scores(index.vectors[mask], q)
        relevant = index.class_ids[mask] == query.class_id
        return _rank(ids, scores, relevant, k, query.id)

    if isinstance(index, CentroidIndex):
        use = index.variant_excluding_view(query.view_id) if cross_view \
            else index
        if use.num_candidates == 0:
            raise NoEligibleTargetsError(
                f"no centroids for query {query.id}")
        if query.class_id not in use.class_ids:
            raise UnjudgeableQueryError(
                f"class {query.class_id} absent from centroid index")
        scores = kernels.matvec_scores(use.vectors, q)
        relevant = use.class_ids == query.class_id
        return _rank(use.class_ids, scores, relevant, k, query.id)

    raise TypeError(f"unsupported index type: {type(index).__name__}")


def write_rankings(results, path):
    """Ranking dump: one line per (query, rank), tab-separated
    ``query_id rank target_id score relevant`` with 9-significant-digit
    scores."""
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            for rank, (tid, score, rel) in enumerate(
                    zip(res.target_ids, res.scores, res.relevant), start=1):
                fh.write(f"{res.query_id}\t{rank}\t{int(tid)}\t"
                         f"{score:.9g}\t{int(rel)}\n")
