"""Kernel backend selection: numba-jitted loops with a pure-numpy fallback.

Set CTLKIT_BACKEND=numpy to force the fallback, CTLKIT_BACKEND=numba to
require numba (ImportError if missing). Default is numba when available.

All kernels accumulate in float64 regardless of input dtype. ``sum_rows``
accumulates rows sequentially in the order given, so callers that need a
canonical (reproducible) result must pass rows pre-sorted by record id.
"""

import os

import numpy as np

__all__ = ["BACKEND", "kernels", "make_kernels", "Kernels"]


def _dot64(a, b):
    s = 0.0
    for j in range(a.shape[0]):
        s += np.float64(a[j]) * np.float64(b[j])
    return s


def _sqdist64(a, b):
    s = 0.0
    for j in range(a.shape[0]):
        d = np.float64(a[j]) - np.float64(b[j])
        s += d * d
    return s


def _sum_rows(x):
    n, d = x.shape
    acc = np.zeros(d, dtype=np.float64)
    for i in range(n):
        for j in range(d):
            acc[j] += np.float64(x[i, j])
    return acc


def _matvec_scores(mat, q):
    n, d = mat.shape
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += mat[i, j] * q[j]
        out[i] = s
    return out


def _pairwise_sqdist(x):
    n, d = x.shape
    out = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        out[i, i] = 0.0
        for k in range(i + 1, n):
            s = 0.0
            for j in range(d):
                diff = x[i, j] - x[k, j]
                s += diff * diff
            out[i, k] = s
            out[k, i] = s
    return out


class Kernels:
    """Bundle of hot-loop kernels, either jitted or plain numpy."""

    def __init__(self, name, dot64, sqdist64, sum_rows, matvec_scores,
                 pairwise_sqdist):
        self.name = name
        self.dot64 = dot64
        self.sqdist64 = sqdist64
        self.sum_rows = sum_rows
        self.matvec_scores = matvec_scores
        self.pairwise_sqdist = pairwise_sqdist


def _numpy_kernels():
    def dot64(a, b):
        return float(np.dot(a.astype(np.float64), b.astype(np.float64)))

    def sqdist64(a, b):
        d = a.astype(np.float64) - b.astype(np.float64)
        return float(np.dot(d, d))

    def sum_rows(x):
        # Row-sequential so the summation order matches the jitted kernel
        # and the scalar oracle (canonical ordering requirement).
        acc = np.zeros(x.shape[1], dtype=np.float64)
        for i in range(x.shape[0]):
            acc += x[i].astype(np.float64)
        return acc

    def matvec_scores(mat, q):
        return mat.astype(np.float64) @ q.astype(np.float64)

    def pairwise_sqdist(x):
        x64 = x.astype(np.float64)
        sq = np.einsum("ij,ij->i", x64, x64)
        out = sq[:, None] + sq[None, :] - 2.0 * (x64 @ x64.T)
        np.maximum(out, 0.0, out=out)
        np.fill_diagonal(out, 0.0)
        return out

    return Kernels("numpy", dot64, sqdist64, sum_rows, matvec_scores,
                   pairwise_sqdist)


def _numba_kernels():
    from numba import njit

    jit = lambda f: njit(cache=True)(f)  # noqa: E731
    return Kernels(
        "numba",
        jit(_dot64),
        jit(_sqdist64),
        jit(_sum_rows),
        jit(_matvec_scores),
        jit(_pairwise_sqdist),
    )


def make_kernels(backend):
    """Build a kernel bundle for `backend` in {"numba", "numpy"}."""
    if backend == "numpy":
        return _numpy_kernels()
    if backend == "numba":
        return _numba_kernels()
    raise ValueError(f"unknown backend: {backend!r}")


def _select_default():
    forced = os.environ.get("CTLKIT_BACKEND", "").strip().lower()
    if forced == "numpy":
        return _numpy_kernels()
    if forced == "numba":
        return _numba_kernels()
    try:
        return _numba_kernels()
    except ImportError:
        return _numpy_kernels()


kernels = _select_default()
BACKEND = kernels.name
