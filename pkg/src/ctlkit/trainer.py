"""Training loop: P x M sampler + MLP encoder + four-loss objective.

Model parameters (MLP, batch-norm affine, classifier head) are updated by
the main optimizer (Adam by default) under a multistep learning-rate
schedule; class centers get their own SGD step with an independent
learning rate.

The per-epoch loss log is written as comma-separated text:
``epoch,lr,triplet,ctl,center,classification,total``.
"""

from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import losses
from .batching import BatchSpec, sample_batches
from .encoder import MlpEncoder
from .losses import (ClassCenters, ClassifierHead, LossWeights, Margins,
                     batch_hard_triplet, center_loss, classification_loss,
                     ctl_batch)

__all__ = [
    "TrainConfig",
    "EpochLog",
    "lr_at_epoch",
    "train",
    "parse_config",
    "load_config",
    "write_loss_log",
]


@dataclass(frozen=True)
class TrainConfig:
    base_lr: float = 1e-4
    lr_decay_epochs: tuple = (40, 70)
    decay_factor: float = 0.1
    epochs: int = 120
    center_lr: float = 0.5
    alpha: float = losses.DEFAULT_MARGIN
    alpha_c: float = losses.DEFAULT_MARGIN
    batch_p: int = 4
    batch_m: int = 4
    optimizer: str = "adam"
    seed: int = 0
    hidden_dims: tuple = (64,)
    embed_dim: int = 32
    w_triplet: float = 1.0
    w_ctl: float = 1.0
    w_center: float = losses.CENTER_WEIGHT
    w_classification: float = 1.0
    ctl_negatives: str = "average"   # or "hardest"
    triplet_mining: str = "hard"     # or "all"
    train_split: str = "train"

    def __post_init__(self):
        if list(self.lr_decay_epochs) != sorted(set(self.lr_decay_epochs)):
            raise ValueError("lr_decay_epochs must be strictly increasing")
        if self.base_lr <= 0 or self.center_lr <= 0 or self.decay_factor <= 0:
            raise ValueError("learning rates and decay factor must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer: {self.optimizer!r}")

    @property
    def margins(self):
        return Margins(self.alpha, self.alpha_c)

    @property
    def weights(self):
        return LossWeights(self.w_triplet, self.w_ctl, self.w_center,
                           self.w_classification)

    @property
    def batch_spec(self):
        return BatchSpec(self.batch_p, self.batch_m, self.seed)


@dataclass
class EpochLog:
    epoch: int
    lr: float
    triplet: float
    ctl: float
    center: float
    classification: float
    total: float


def lr_at_epoch(cfg, epoch):
    """base_lr * decay_factor^(number of decay epochs <= epoch)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    n = sum(1 for e in cfg.lr_decay_epochs if e <= epoch)
    if n == 0:
        return cfg.base_lr
    # Divide by the inverse factor so decade steps stay exact in floating
    # point (1e-4 -> 1e-5 -> 1e-6 for the default factor 0.1).
    return cfg.base_lr / (1.0 / cfg.decay_factor) ** n


class _Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = self.m[name] / (1 - b1 ** self.t)
            vhat = self.v[name] / (1 - b2 ** self.t)
            params[name] -= lr * mhat / (np.sqrt(vhat) + self.eps)


class _Sgd:
    def step(self, params, grads, lr):
        for name, g in grads.items():
            params[name] -= lr * g


def train(ds, cfg):
    """Train an encoder on `cfg.train_split`; returns (encoder, loss log).

    Deterministic for a fixed config (epoch batches derive from
    (seed, epoch)). Loss wiring: triplet + CTL + center loss on the raw
    embeddings, classification loss on the batch-normalized embeddings.
    """
    class_rows = ds.class_rows(cfg.train_split)
    class_list = sorted(class_rows)
    class_to_idx = {k: i for i, k in enumerate(class_list)}

    enc = MlpEncoder(ds.dim, cfg.embed_dim, hidden_dims=cfg.hidden_dims,
                     seed=cfg.seed)
    head_rng = np.random.default_rng([cfg.seed, 0xC1A55])
    head = ClassifierHead.init(len(class_list), cfg.embed_dim, head_rng)
    centers = ClassCenters.init_zero(class_list, cfg.embed_dim,
                                     lr=cfg.center_lr)
    opt = _Adam() if cfg.optimizer == "adam" else _Sgd()

    row_by_id = {int(ds.ids[r]): r for r in range(len(ds))}
    log = []
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(cfg, epoch)
        batches = sample_batches(ds, cfg.batch_spec, split=cfg.train_split,
                                 epoch=epoch)
        sums = np.zeros(5)
        for batch in batches:
            ids = batch.all_ids()
            rows = np.asarray([row_by_id[int(i)] for i in ids])
            x = ds.vectors[rows].astype(np.float64)
            labels = ds.class_ids[rows]
            idx_labels = np.asarray([class_to_idx[int(k)] for k in labels])

            raw, norm = enc.forward(x, "train")
            t_val, t_grad = batch_hard_triplet(raw, labels, cfg.alpha,
                                               cfg.triplet_mining)
            c_val, c_grad = ctl_batch(raw, labels, cfg.alpha_c,
                                      cfg.ctl_negatives)
            ce_val, ce_grad, ce_cgrads, ce_counts = center_loss(
                raw, labels, centers)
            cl_val, cl_grad, cl_gw, cl_gb = classification_loss(
                norm, idx_labels, head)

            w = cfg.weights
            d_raw = (w.triplet * t_grad + w.ctl * c_grad
                     + w.center * ce_grad)
            d_norm = w.classification * cl_grad
            param_grads, _ = enc.backward(d_raw, d_norm)
            param_grads["head.weight"] = w.classification * cl_gw
            param_grads["head.bias"] = w.classification * cl_gb

            params = dict(enc.params)
            params["head.weight"] = head.weight
            params["head.bias"] = head.bias
            opt.step(params, param_grads, lr)
            for name in enc.params:
                enc.params[name] = params[name]
            head.weight = params["head.weight"]
            head.bias = params["head.bias"]
            centers.sgd_step(ce_cgrads, ce_counts)

            total = (w.triplet * t_val + w.ctl * c_val + w.center * ce_val
                     + w.classification * cl_val)
            sums += (t_val, c_val, ce_val, cl_val, total)
        n = max(len(batches), 1)
        log.append(EpochLog(epoch + 1, lr, *(sums / n)))
    return enc, log


_INT_FIELDS = {"epochs", "batch_p", "batch_m", "seed", "embed_dim"}
_TUPLE_FIELDS = {"lr_decay_epochs", "hidden_dims"}
_STR_FIELDS = {"optimizer", "ctl_negatives", "triplet_mining", "train_split"}


def parse_config(text):
    """Parse key=value lines (``#`` comments allowed) into a TrainConfig.

    Unknown keys are an error.
    """
    known = {f.name for f in fields(TrainConfig)}
    cfg = TrainConfig()
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in known:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in _TUPLE_FIELDS:
            overrides[key] = tuple(
                int(v) for v in value.split(",") if v.strip())
        elif key in _INT_FIELDS:
            overrides[key] = int(value)
        elif key in _STR_FIELDS:
            overrides[key] = value
        else:
            overrides[key] = float(value)
    return replace(cfg, **overrides)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def write_loss_log(log, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,lr,triplet,ctl,center,classification,total\n")
        for e in log:
            fh.write(f"{e.epoch},{e.lr:.9g},{e.triplet:.9g},{e.ctl:.9g},"
                     f"{e.center:.9g},{e.classification:.9g},{e.total:.9g}\n")
