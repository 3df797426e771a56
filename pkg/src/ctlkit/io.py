"""Embedding dataset container, file formats, and synthetic data generator.

Two on-disk formats:

* text: one record per line, tab-separated
  ``id  class_id  view_id  split  v0 ... v{D-1}`` with floats printed to
  9 significant digits (enough for exact float32 round-trip). Lines
  starting with ``#`` are comments.
* binary: magic ``CTLE``, version u16, D u32, count u64, then per record
  id u64, class u32, view u16, split u8, pad u8, and D little-endian
  float32 values. Byte counts are therefore exact:
  ``18 + count * (16 + 4*D)``.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SPLITS",
    "DataFormatError",
    "EmbeddingRecord",
    "Dataset",
    "load_dataset",
    "save_dataset",
    "generate_synthetic",
    "binary_file_bytes",
    "vector_payload_bytes",
]

SPLITS = ("query", "gallery", "train")
_SPLIT_CODE = {name: i for i, name in enumerate(SPLITS)}

_MAGIC = b"CTLE"
_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_REC_HEADER = struct.Struct("<QIHBB")


class DataFormatError(Exception):
    """Malformed or inconsistent dataset file."""


@dataclass(frozen=True)
class EmbeddingRecord:
    id: int
    class_id: int
    view_id: int
    split: str
    vector: np.ndarray


@dataclass
class Dataset:
    """Ordered collection of embedding records backed by numpy arrays."""

    dim: int
    ids: np.ndarray          # int64 [N]
    class_ids: np.ndarray    # int64 [N]
    view_ids: np.ndarray     # int64 [N]
    splits: np.ndarray       # uint8 [N], codes into SPLITS
    vectors: np.ndarray      # float32 [N, dim]
    _class_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.ids)
        if self.vectors.shape != (n, self.dim):
            raise DataFormatError(
                f"vector array shape {self.vectors.shape} does not match "
                f"{n} records of dim {self.dim}")
        if len(np.unique(self.ids)) != n:
            raise DataFormatError("duplicate record ids")
        if not np.all(np.isfinite(self.vectors)):
            raise DataFormatError("non-finite vector entries")

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.class_ids, other.class_ids)
                and np.array_equal(self.view_ids, other.view_ids)
                and np.array_equal(self.splits, other.splits)
                and np.array_equal(self.vectors, other.vectors))

    def record(self, row):
        return EmbeddingRecord(
            id=int(self.ids[row]),
            class_id=int(self.class_ids[row]),
            view_id=int(self.view_ids[row]),
            split=SPLITS[self.splits[row]],
            vector=self.vectors[row],
        )

    def split_rows(self, split):
        """Row positions of one split, ordered by ascending record id."""
        code = _SPLIT_CODE[split]
        rows = np.flatnonzero(self.splits == code)
        return rows[np.argsort(self.ids[rows], kind="stable")]

    def class_rows(self, split):
        """Map class_id -> row positions (ascending record id) for a split."""
        if split not in self._class_index:
            index = {}
            for row in self.split_rows(split):
                index.setdefault(int(self.class_ids[row]), []).append(row)
            self._class_index[split] = {
                k: np.asarray(v, dtype=np.int64) for k, v in index.items()
            }
        return self._class_index[split]

    @classmethod
    def from_records(cls, records):
        records = list(records)
        if not records:
            raise DataFormatError("cannot build a dataset from zero records")
        dim = len(records[0].vector)
        return cls(
            dim=dim,
            ids=np.asarray([r.id for r in records], dtype=np.int64),
            class_ids=np.asarray([r.class_id for r in records], dtype=np.int64),
            view_ids=np.asarray([r.view_id for r in records], dtype=np.int64),
            splits=np.asarray([_SPLIT_CODE[r.split] for r in records],
                              dtype=np.uint8),
            vectors=np.stack([np.asarray(r.vector, dtype=np.float32)
                              for r in records]),
        )


def vector_payload_bytes(count, dim):
    """Bytes of raw float32 vector payload for `count` records."""
    return count * 4 * dim


def binary_file_bytes(count, dim):
    """Exact on-disk size of the binary format."""
    return _HEADER.size + count * (_REC_HEADER.size + 4 * dim)


def _load_text(path):
    ids, classes, views, splits, vecs = [], [], [], [], []
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 5:
                raise DataFormatError(
                    f"{path}:{lineno}: expected at least 5 fields, "
                    f"got {len(fields)}")
            try:
                rid = int(fields[0])
                cls = int(fields[1])
                view = int(fields[2])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            split = fields[3]
            if split not in _SPLIT_CODE:
                raise DataFormatError(
                    f"{path}:{lineno}: unknown split {split!r}")
            try:
                vec = np.asarray([float(x) for x in fields[4:]],
                                 dtype=np.float32)
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DataFormatError(
                    f"{path}:{lineno}: vector has {len(vec)} components, "
                    f"expected {dim}")
            ids.append(rid)
            classes.append(cls)
            views.append(view)
            splits.append(_SPLIT_CODE[split])
            vecs.append(vec)
    if dim is None:
        raise DataFormatError(f"{path}: no records")
    return Dataset(
        dim=dim,
        ids=np.asarray(ids, dtype=np.int64),
        class_ids=np.asarray(classes, dtype=np.int64),
        view_ids=np.asarray(views, dtype=np.int64),
        splits=np.asarray(splits, dtype=np.uint8),
        vectors=np.stack(vecs),
    )


def _load_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise DataFormatError(f"{path}: truncated header")
    magic, version, dim, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise DataFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    rec_dtype = np.dtype([
        ("id", "<u8"), ("class", "<u4"), ("view", "<u2"),
        ("split", "u1"), ("pad", "u1"), ("vec", "<f4", (dim,)),
    ])
    expected = _HEADER.size + count * rec_dtype.itemsize
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: size {len(raw)} != expected {expected}")
    recs = np.frombuffer(raw, dtype=rec_dtype, count=count,
                         offset=_HEADER.size)
    if count and recs["split"].max() >= len(SPLITS):
        raise DataFormatError(f"{path}: invalid split code")
    return Dataset(
        dim=int(dim),
        ids=recs["id"].astype(np.int64),
        class_ids=recs["class"].astype(np.int64),
        view_ids=recs["view"].astype(np.int64),
        splits=recs["split"].copy(),
        vectors=np.ascontiguousarray(recs["vec"], dtype=np.float32)
        if count else np.empty((0, dim), dtype=np.float32),
    )


def load_dataset(path, format="binary"):
    if format == "text":
        return _load_text(path)
    if format == "binary":
        return _load_binary(path)
    raise ValueError(f"unknown format: {format!r}")


def save_dataset(ds, path, format="binary"):
    if format == "text":
        with open(path, "w", encoding="utf-8") as fh:
            for row in range(len(ds)):
                vals = "\t".join(format_float(x) for x in ds.vectors[row])
                fh.write(f"{ds.ids[row]}\t{ds.class_ids[row]}\t"
                         f"{ds.view_ids[row]}\t{SPLITS[ds.splits[row]]}\t"
                         f"{vals}\n")
        return
    if format != "binary":
        raise ValueError(f"unknown format: {format!r}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, ds.dim, len(ds)))
        for row in range(len(ds)):
            fh.write(_REC_HEADER.pack(int(ds.ids[row]), int(ds.class_ids[row]),
                                      int(ds.view_ids[row]),
                                      int(ds.splits[row]), 0))
            fh.write(ds.vectors[row].astype("<f4").tobytes())


def format_float(x):
    # 9 significant digits round-trips any float32 exactly.
    return "%.9g" % float(x)


def generate_synthetic(num_classes, samples_per_class, dim, noise_sigma,
                       num_views, seed, queries_per_class=1, train_classes=0):
    """Synthetic embedding dataset with one unit-norm center per class.

    Classes ``[0, train_classes)`` go entirely to the train split. For the
    remaining classes the first `queries_per_class` samples are tagged
    query and the rest gallery. Views are assigned round-robin. Fully
    deterministic for a given seed.
    """
    if num_classes < 1 or samples_per_class < 1 or dim < 1 or num_views < 1:
        raise ValueError("all counts must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    if not (0 <= train_classes <= num_classes):
        raise ValueError("train_classes out of range")
    if queries_per_class >= samples_per_class and train_classes < num_classes:
        raise ValueError("queries_per_class must leave gallery samples")

    rng = np.random.default_rng(seed)
    ids, classes, views, splits, vecs = [], [], [], [], []
    next_id = 0
    for k in range(num_classes):
        center = rng.standard_normal(dim)
        center /= np.linalg.norm(center)
        for i in range(samples_per_class):
            if noise_sigma > 0:
                vec = center + noise_sigma * rng.standard_normal(dim)
            else:
                vec = center
            if k < train_classes:
                split = "train"
            elif i < queries_per_class:
                split = "query"
            else:
                split = "gallery"
            ids.append(next_id)
            classes.append(k)
            views.append(i % num_views)
            splits.append(_SPLIT_CODE[split])
            vecs.append(vec.astype(np.float32))
            next_id += 1
    return Dataset(
        dim=dim,
        ids=np.asarray(ids, dtype=np.int64),
        class_ids=np.asarray(classes, dtype=np.int64),
        view_ids=np.asarray(views, dtype=np.int64),
        splits=np.asarray(splits, dtype=np.uint8),
        vectors=np.stack(vecs),
    )
