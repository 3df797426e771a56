"""Dense vector arithmetic shared by every other module.

Vectors are 1-D float32 numpy arrays; sums and distances accumulate in
float64. ``mean_vectors`` is order-sensitive at the bit level, so callers
must pass vectors in canonical order (ascending record id) when a
reproducible centroid is required.
"""

import numpy as np

from .backend import kernels

__all__ = [
    "as_vector",
    "dot",
    "squared_l2_distance",
    "cosine_similarity",
    "mean_vectors",
]


def as_vector(v):
    """Coerce to a contiguous 1-D float32 array, rejecting non-finite entries."""
    arr = np.ascontiguousarray(v, dtype=np.float32)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector contains NaN or Inf")
    return arr


def _check_pair(a, b):
    a = as_vector(a)
    b = as_vector(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def dot(a, b):
    a, b = _check_pair(a, b)
    return float(kernels.dot64(a, b))


def squared_l2_distance(a, b):
    a, b = _check_pair(a, b)
    return float(kernels.sqdist64(a, b))


def cosine_similarity(a, b):
    a, b = _check_pair(a, b)
    na = kernels.dot64(a, a) ** 0.5
    nb = kernels.dot64(b, b) ** 0.5
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vector")
    return float(kernels.dot64(a, b) / (na * nb))


def mean_vectors(vs):
    """Component-wise mean of a non-empty list of equal-length vectors.

    Accumulates in float64 over rows in the order given, then rounds the
    result back to float32 storage precision.
    """
    vs = list(vs)
    if not vs:
        raise ValueError("mean of empty vector list")
    rows = [as_vector(v) for v in vs]
    dim = rows[0].shape[0]
    for r in rows[1:]:
        if r.shape[0] != dim:
            raise ValueError(
                f"dimension mismatch: {dim} vs {r.shape[0]}")
    stacked = np.stack(rows)
    acc = kernels.sum_rows(stacked)
    return (acc / len(rows)).astype(np.float32)
