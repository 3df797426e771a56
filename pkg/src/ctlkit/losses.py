"""Training losses: instance triplet, centroid triplet (CTL), center loss,
and softmax classification, each with analytic gradients.

All batch-level functions take float64 arrays ``[B, D]`` and return
``(value, grad)`` pairs where grad is with respect to the batch
embeddings. The hinge subgradient at exactly zero is taken as zero.
"""

from dataclasses import dataclass, field

import numpy as np

from .backend import kernels

__all__ = [
    "Margins",
    "LossWeights",
    "LossBundle",
    "ClassCenters",
    "ClassifierHead",
    "triplet_loss",
    "ctl_loss",
    "ctl_grad",
    "batch_hard_triplet",
    "ctl_batch",
    "center_loss",
    "classification_loss",
    "combine",
]

DEFAULT_MARGIN = 0.3
CENTER_WEIGHT = 5e-4


@dataclass(frozen=True)
class Margins:
    alpha: float = DEFAULT_MARGIN      # instance triplet margin
    alpha_c: float = DEFAULT_MARGIN    # centroid triplet margin

    def __post_init__(self):
        if self.alpha < 0 or self.alpha_c < 0:
            raise ValueError("margins must be >= 0")


@dataclass(frozen=True)
class LossWeights:
    triplet: float = 1.0
    ctl: float = 1.0
    center: float = CENTER_WEIGHT
    classification: float = 1.0


@dataclass
class LossBundle:
    triplet: float
    ctl: float
    center: float
    classification: float
    total: float
    grad: dict  # embedding id -> float64 gradient vector of the total


@dataclass
class ClassCenters:
    """Learnable per-class centers for the auxiliary center loss.

    Updated by a dedicated SGD step (default lr 0.5) using the
    count-normalized update direction ``sum(c - x_i) / (1 + count)``.
    """

    centers: dict = field(default_factory=dict)
    lr: float = 0.5

    @classmethod
    def init_zero(cls, class_ids, dim, lr=0.5):
        return cls({int(k): np.zeros(dim, dtype=np.float64)
                    for k in class_ids}, lr=lr)

    def sgd_step(self, grads, counts):
        for k, g in grads.items():
            self.centers[k] -= self.lr * g / (1.0 + counts[k])


@dataclass
class ClassifierHead:
    weight: np.ndarray  # [num_classes, D]
    bias: np.ndarray    # [num_classes]

    @classmethod
    def init(cls, num_classes, dim, rng):
        limit = np.sqrt(6.0 / dim)
        return cls(weight=rng.uniform(-limit, limit, size=(num_classes, dim)),
                   bias=np.zeros(num_classes, dtype=np.float64))

    @property
    def num_classes(self):
        return self.weight.shape[0]


def _check_dims(*vecs):
    dims = {np.asarray(v).shape[-1] for v in vecs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


def triplet_loss(fa, fp, fn_, alpha):
    """Hinge on squared distances: [d(a,p) - d(a,n) + alpha]+."""
    _check_dims(fa, fp, fn_)
    fa = np.asarray(fa, dtype=np.float64)
    inner = (kernels.sqdist64(fa, np.asarray(fp, dtype=np.float64))
             - kernels.sqdist64(fa, np.asarray(fn_, dtype=np.float64))
             + alpha)
    return max(inner, 0.0)


def ctl_loss(fa, c_p, c_n, alpha_c):
    """Centroid triplet loss: the triplet hinge with centroids as targets."""
    return triplet_loss(fa, c_p, c_n, alpha_c)


def ctl_grad(fa, c_p, c_n, alpha_c):
    """Subgradients of ctl_loss w.r.t. (fa, c_p, c_n)."""
    _check_dims(fa, c_p, c_n)
    fa = np.asarray(fa, dtype=np.float64)
    c_p = np.asarray(c_p, dtype=np.float64)
    c_n = np.asarray(c_n, dtype=np.float64)
    inner = (kernels.sqdist64(fa, c_p) - kernels.sqdist64(fa, c_n) + alpha_c)
    if inner <= 0.0:
        z = np.zeros_like(fa)
        return z, z.copy(), z.copy()
    d_fa = 2.0 * (fa - c_p) - 2.0 * (fa - c_n)
    d_cp = -2.0 * (fa - c_p)
    d_cn = 2.0 * (fa - c_n)
    return d_fa, d_cp, d_cn


def batch_hard_triplet(emb, labels, alpha, mining="hard"):
    """Instance triplet loss over a batch with batch-hard mining.

    mining="hard": per anchor, hardest positive and hardest negative.
    mining="all": mean hinge over all valid (a, p, n) triplets.
    Returns (value, grad [B, D]).
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    b = emb.shape[0]
    d2 = kernels.pairwise_sqdist(emb)
    grad = np.zeros_like(emb)

    same = labels[:, None] == labels[None, :]
    pos_mask = same & ~np.eye(b, dtype=bool)
    neg_mask = ~same

    if mining == "hard":
        total = 0.0
        count = 0
        for a in range(b):
            pos = np.flatnonzero(pos_mask[a])
            neg = np.flatnonzero(neg_mask[a])
            if len(pos) == 0 or len(neg) == 0:
                continue
            p = pos[np.argmax(d2[a, pos])]
            n = neg[np.argmin(d2[a, neg])]
            inner = d2[a, p] - d2[a, n] + alpha
            count += 1
            if inner > 0.0:
                total += inner
                grad[a] += 2.0 * (emb[n] - emb[p])
                grad[p] += 2.0 * (emb[p] - emb[a])
                grad[n] += 2.0 * (emb[a] - emb[n])
        if count == 0:
            return 0.0, grad
        return total / count, grad / count

    if mining != "all":
        raise ValueError(f"unknown mining mode: {mining!r}")

    total = 0.0
    count = 0
    for a in range(b):
        pos = np.flatnonzero(pos_mask[a])
        neg = np.flatnonzero(neg_mask[a])
        for p in pos:
            for n in neg:
                count += 1
                inner = d2[a, p] - d2[a, n] + alpha
                if inner > 0.0:
                    total += inner
                    grad[a] += 2.0 * (emb[n] - emb[p])
                    grad[p] += 2.0 * (emb[p] - emb[a])
                    grad[n] += 2.0 * (emb[a] - emb[n])
    if count == 0:
        return 0.0, grad
    return total / count, grad / count


def ctl_batch(emb, labels, alpha_c, negatives="average"):
    """Centroid triplet loss over a batch.

    Each sample acts as a query against its leave-one-out class prototype
    and the full centroids of the other classes in the batch. With
    negatives="average" the hinge is averaged over every negative class;
    "hardest" keeps only the nearest negative centroid. Returns
    (value, grad [B, D]) with gradients chained through prototype and
    centroid construction.
    """
    if negatives not in ("average", "hardest"):
        raise ValueError(f"unknown negatives mode: {negatives!r}")
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    b = emb.shape[0]
    grad = np.zeros_like(emb)

    classes = {}
    for i in range(b):
        classes.setdefault(int(labels[i]), []).append(i)
    for k, members in classes.items():
        if len(members) < 2:
            raise ValueError(f"class {k} has fewer than 2 samples in batch")

    centroids = {k: emb[m].mean(axis=0) for k, m in classes.items()}
    class_list = sorted(classes)

    total = 0.0
    n_queries = 0
    for i in range(b):
        k = int(labels[i])
        members = classes[k]
        others = [m for m in members if m != i]
        proto = emb[others].mean(axis=0)
        neg_classes = [j for j in class_list if j != k]
        if not neg_classes:
            continue
        n_queries += 1

        if negatives == "hardest":
            dists = [kernels.sqdist64(emb[i], centroids[j])
                     for j in neg_classes]
            neg_classes = [neg_classes[int(np.argmin(dists))]]

        share = 1.0 / len(neg_classes)
        for j in neg_classes:
            c_n = centroids[j]
            d_fa, d_cp, d_cn = ctl_grad(emb[i], proto, c_n, alpha_c)
            inner = (kernels.sqdist64(emb[i], proto)
                     - kernels.sqdist64(emb[i], c_n) + alpha_c)
            total += share * max(inner, 0.0)
            grad[i] += share * d_fa
            for m in others:
                grad[m] += share * d_cp / len(others)
            for m in classes[j]:
                grad[m] += share * d_cn / len(classes[j])
    if n_queries == 0:
        return 0.0, grad
    return total / n_queries, grad / n_queries


def center_loss(emb, labels, centers):
    """Center loss 0.5 * sum_i ||x_i - c_{y_i}||^2.

    Returns (value, grad_emb [B, D], grad_centers dict, counts dict).
    grad_centers holds the true gradient sum(c - x_i); the
    count-normalized update direction is applied by ClassCenters.sgd_step.
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels)
    grad = np.empty_like(emb)
    grad_centers = {}
    counts = {}
    value = 0.0
    for i in range(emb.shape[0]):
        k = int(labels[i])
        if k not in centers.centers:
            raise KeyError(f"no center for class {k}")
        diff = emb[i] - centers.centers[k]
        value += 0.5 * float(diff @ diff)
        grad[i] = diff
        if k not in grad_centers:
            grad_centers[k] = np.zeros(emb.shape[1], dtype=np.float64)
            counts[k] = 0
        grad_centers[k] -= diff
        counts[k] += 1
    return value, grad, grad_centers, counts


def classification_loss(emb, labels, head):
    """Mean softmax cross-entropy over the batch.

    Returns (value, grad_emb, grad_weight, grad_bias).
    """
    emb = np.asarray(emb, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min(initial=0) < 0 or (len(labels)
                                     and labels.max() >= head.num_classes):
        raise ValueError("class id out of range for classifier head")
    logits = emb @ head.weight.T + head.bias
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    probs = exp / exp.sum(axis=1, keepdims=True)
    b = emb.shape[0]
    value = float(-np.log(probs[np.arange(b), labels]).mean())
    delta = probs.copy()
    delta[np.arange(b), labels] -= 1.0
    delta /= b
    return (value, delta @ head.weight, delta.T @ emb, delta.sum(axis=0))


def combine(ids, components, weights=LossWeights()):
    """Weighted sum of loss components into a LossBundle.

    `components` maps name in {triplet, ctl, center, classification} to
    (value, grad [B, D]); grads must all be in the same embedding space.
    """
    vals = {}
    b = len(ids)
    total_grad = None
    total = 0.0
    for name in ("triplet", "ctl", "center", "classification"):
        value, grad = components.get(name, (0.0, None))
        w = getattr(weights, name)
        vals[name] = float(value)
        total += w * float(value)
        if grad is not None:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape[0] != b:
                raise ValueError("gradient batch size mismatch")
            total_grad = (w * grad if total_grad is None
                          else total_grad + w * grad)
    if total_grad is None:
        total_grad = np.zeros((b, 1))
    return LossBundle(
        triplet=vals["triplet"],
        ctl=vals["ctl"],
        center=vals["center"],
        classification=vals["classification"],
        total=total,
        grad={int(i): total_grad[row] for row, i in enumerate(ids)},
    )
