"""P x M mini-batch construction (no resampling) and leave-one-out
prototype centroids.

Classes with a single eligible sample are excluded entirely; classes with
fewer than M samples contribute all their unique samples rather than
repeats. Sample id lists are kept in ascending id order (canonical
summation order for centroids).
"""

from dataclasses import dataclass

import numpy as np

from . import core

__all__ = [
    "BatchSpec",
    "Batch",
    "sample_batches",
    "build_prototype",
    "enumerate_query_prototype_pairs",
]


@dataclass(frozen=True)
class BatchSpec:
    num_classes: int = 4       # P
    samples_per_class: int = 4  # M
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes per batch")
        if self.samples_per_class < 2:
            raise ValueError("need at least 2 samples per class")


@dataclass(frozen=True)
class Batch:
    """Per class: record ids, ascending, all distinct."""

    samples: dict  # class_id -> np.ndarray of record ids

    def all_ids(self):
        return np.concatenate([self.samples[k] for k in sorted(self.samples)])


def sample_batches(ds, spec, split="train", epoch=0):
    """One epoch of P x M batches over `split`.

    Classes are shuffled deterministically from (seed, epoch); each
    eligible class (>= 2 samples) appears exactly once per epoch. A
    trailing group smaller than P is dropped.
    """
    class_rows = ds.class_rows(split)
    eligible = sorted(k for k, rows in class_rows.items() if len(rows) >= 2)
    if len(eligible) < spec.num_classes:
        raise ValueError(
            f"{len(eligible)} eligible classes < P={spec.num_classes}")
    rng = np.random.default_rng([spec.seed, epoch])
    order = list(eligible)
    rng.shuffle(order)

    batches = []
    p = spec.num_classes
    for start in range(0, len(order) - p + 1, p):
        group = order[start:start + p]
        samples = {}
        for k in group:
            ids = ds.ids[class_rows[k]]
            take = min(spec.samples_per_class, len(ids))
            chosen = rng.choice(ids, size=take, replace=False)
            samples[k] = np.sort(chosen)
        batches.append(Batch(samples=samples))
    return batches


def build_prototype(vectors, query_index):
    """Mean of all class samples except the query (leave-one-out centroid)."""
    vectors = list(vectors)
    if len(vectors) < 2:
        raise ValueError("prototype needs at least 2 class samples")
    if not (0 <= query_index < len(vectors)):
        raise ValueError(f"query_index {query_index} out of range")
    rest = [v for i, v in enumerate(vectors) if i != query_index]
    return core.mean_vectors(rest)


def enumerate_query_prototype_pairs(batch, vectors_by_id):
    """All (query id, positive prototype, negative centroids) for a batch.

    `vectors_by_id` maps record id -> vector. The negative centroid of
    class j uses all of its batch samples; the query never contributes to
    its own prototype. Negative centroids are returned as
    (class_id, centroid) in ascending class order.
    """
    classes = sorted(batch.samples)
    centroids = {
        k: core.mean_vectors([vectors_by_id[int(i)]
                              for i in batch.samples[k]])
        for k in classes
    }
    pairs = []
    for k in classes:
        ids = batch.samples[k]
        vecs = [vectors_by_id[int(i)] for i in ids]
        for qi, qid in enumerate(ids):
            proto = build_prototype(vecs, qi)
            negs = [(j, centroids[j]) for j in classes if j != k]
            pairs.append((int(qid), proto, negs))
    return pairs
