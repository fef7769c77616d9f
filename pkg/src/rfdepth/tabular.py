"""Datasets, file loaders, train/validation/test sampling and result CSVs.

IDX layout (all header words are big-endian unsigned 32-bit integers)::

    images: magic 2051, count, rows, cols, then count*rows*cols ubytes
    labels: magic 2049, count, then count ubytes

Files ending in ``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import (
    CapacityError,
    ConsistencyError,
    DomainError,
    EmptyDatasetError,
    FormatError,
    TruncatedFileError,
)

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """An n x p numeric design with a regression or class-label response.

    Arrays are copied to read-only contiguous buffers, so a ``Dataset`` can be
    shared between threads. Classification responses hold class indices
    ``0..n_classes-1`` stored as float64 (the tree kernels read one dtype).
    """

    features: np.ndarray
    response: np.ndarray
    task: str = REGRESSION
    n_classes: Optional[int] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.response, dtype=np.float64)
        if X.ndim != 2:
            raise DomainError(f"features must be 2-D, got shape {X.shape}")
        n, p = X.shape
        if n < 1:
            raise EmptyDatasetError("dataset has no rows")
        if p < 1:
            raise DomainError("dataset has no feature columns")
        if y.shape != (n,):
            raise DomainError(
                f"response length {y.shape} does not match n={n}")
        if not np.all(np.isfinite(X)):
            raise DomainError("features contain NaN or Inf")
        if self.task not in TASKS:
            raise DomainError(f"unknown task {self.task!r}")
        k = self.n_classes
        if self.task == REGRESSION:
            if not np.all(np.isfinite(y)):
                raise DomainError("regression response contains NaN or Inf")
            k = None
        else:
            if not np.all(y == np.round(y)) or y.min() < 0:
                raise DomainError("class labels must be non-negative integers")
            if k is None:
                k = max(int(y.max()) + 1, 2)
            if k < 2:
                raise DomainError("classification needs at least 2 classes")
            if y.max() >= k:
                raise DomainError(f"class label {int(y.max())} >= n_classes={k}")
        names = self.feature_names
        if names is not None:
            names = tuple(str(s) for s in names)
            if len(names) != p:
                raise DomainError("feature_names length does not match p")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "response", _frozen(y))
        object.__setattr__(self, "n_classes", None if k is None else int(k))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def labels(self) -> np.ndarray:
        """Class indices as int64 (classification only)."""
        if self.task != CLASSIFICATION:
            raise DomainError("labels are only defined for classification")
        return self.response.astype(np.int64)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.response[idx], self.task,
                       self.n_classes, self.feature_names)

    def as_task(self, task: str) -> "Dataset":
        """Reinterpret the response, e.g. 0/1 labels as a regression target."""
        if task == self.task:
            return self
        return Dataset(self.features, self.response, task,
                       feature_names=self.feature_names)


@dataclass(frozen=True)
class SplitPlan:
    """How many points to draw for train/validation/test, and the seed."""

    source: str
    sizes: tuple
    seed: int = 0

    def __post_init__(self):
        if len(self.sizes) != 3 or any(int(s) < 0 for s in self.sizes):
            raise DomainError("sizes must be three non-negative counts")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _idx_header(path, data: bytes, magic: int, n_words: int):
    need = 4 * n_words
    if len(data) < need:
        raise TruncatedFileError(path, len(data), need - len(data))
    words = struct.unpack(">" + "I" * n_words, data[:need])
    if words[0] != magic:
        raise FormatError(
            f"{path}: bad IDX magic number {words[0]} (expected {magic})")
    return words[1:]


def _idx_body(path, data: bytes, offset: int, size: int) -> np.ndarray:
    if len(data) < offset + size:
        raise TruncatedFileError(path, len(data), offset + size - len(data))
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=offset)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair (e.g. MNIST) as a classification dataset.

    Pixels are kept as raw 0-255 values, one feature per pixel in row-major
    order; labels become the class response with ``n_classes=10``.
    """
    img = _read_bytes(images_path)
    count, rows, cols = _idx_header(images_path, img, IDX_IMAGES_MAGIC, 4)
    lab = _read_bytes(labels_path)
    (n_labels,) = _idx_header(labels_path, lab, IDX_LABELS_MAGIC, 2)
    if count == 0:
        raise EmptyDatasetError(f"{images_path}: header declares 0 images")
    if count != n_labels:
        raise ConsistencyError(
            f"{images_path} has {count} images but {labels_path} "
            f"has {n_labels} labels")
    p = rows * cols
    pixels = _idx_body(images_path, img, 16, count * p).reshape(count, p)
    labels = _idx_body(labels_path, lab, 8, count)
    k = max(10, int(labels.max()) + 1)
    return Dataset(pixels.astype(np.float64), labels.astype(np.float64),
                   CLASSIFICATION, k)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path):
    """Write uint8 images (count, rows, cols) and labels in IDX layout."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    count, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def binarize_label(d: Dataset, positive_class: int) -> Dataset:
    """Recode a class response as 1 for ``positive_class`` and 0 otherwise."""
    if d.task != CLASSIFICATION:
        raise DomainError("binarize_label needs a classification dataset")
    if not 0 <= positive_class < d.n_classes:
        raise DomainError(
            f"positive_class {positive_class} outside 0..{d.n_classes - 1}")
    y = (d.response == positive_class).astype(np.float64)
    return Dataset(d.features, y, CLASSIFICATION, 2, d.feature_names)


def subsample_splits(d_train: Dataset, d_test: Dataset, plan: SplitPlan):
    """Draw (train, validation, test) without replacement.

    Train comes from ``d_train``; validation and test come from ``d_test`` and
    never share a row. A validation size of 0 yields ``None`` in its place.
    """
    n_tr, n_val, n_te = plan.sizes
    if n_tr > d_train.n:
        raise CapacityError(
            f"train size {n_tr} exceeds training pool of {d_train.n}")
    if n_val + n_te > d_test.n:
        raise CapacityError(
            f"validation+test sizes {n_val}+{n_te} exceed test pool "
            f"of {d_test.n}")
    ss = np.random.SeedSequence(plan.seed)
    rng_tr, rng_te = (np.random.default_rng(s) for s in ss.spawn(2))
    tr_idx = np.sort(rng_tr.choice(d_train.n, n_tr, replace=False))
    pool = rng_te.choice(d_test.n, n_val + n_te, replace=False)
    val_idx = np.sort(pool[:n_val])
    te_idx = np.sort(pool[n_val:])
    val = d_test.take(val_idx) if n_val else None
    return d_train.take(tr_idx), val, d_test.take(te_idx)


def load_delimited(path, response: str = "y", task: str = REGRESSION,
                   delimiter: str = ",") -> Dataset:
    """Read a headed delimited text file; ``response`` names the target column.

    Every other column is a numeric feature.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path}: file is empty") from None
        rows = [r for r in reader if r]
    if response not in header:
        raise FormatError(f"{path}: no response column {response!r}")
    j = header.index(response)
    try:
        table = np.array(rows, dtype=np.float64).reshape(len(rows), len(header))
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric or ragged rows ({exc})") from exc
    if len(rows) == 0:
        raise EmptyDatasetError(f"{path}: no data rows")
    names = [h for i, h in enumerate(header) if i != j]
    X = np.delete(table, j, axis=1)
    return Dataset(X, table[:, j], task, feature_names=names)


def write_delimited(d: Dataset, path, response: str = "y"):
    names = d.feature_names or tuple(f"x{j + 1}" for j in range(d.p))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((response,) + tuple(names))
        for yi, row in zip(d.response, d.features):
            w.writerow([_fmt(float(yi))] + [_fmt(float(v)) for v in row])


@dataclass(frozen=True)
class SweepResult:
    """One aggregated grid point of an experiment sweep.

    Unused grid coordinates are ``None`` and render as empty CSV cells.
    """

    experiment: str
    setting: str
    snr: Optional[float] = None
    mtry: Optional[int] = None
    maxnodes: Optional[int] = None
    nodesize: Optional[int] = None
    n_trees: Optional[int] = None
    rep_count: int = 0
    mean_train_loss: float = math.nan
    mean_test_loss: float = math.nan
    se_test_loss: float = math.nan


CSV_COLUMNS = tuple(f.name for f in fields(SweepResult))
_INT_COLUMNS = {"mtry", "maxnodes", "nodesize", "n_trees", "rep_count"}
_FLOAT_COLUMNS = {"snr", "mean_train_loss", "mean_test_loss", "se_test_loss"}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        # repr is the shortest string that parses back to the same double
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_results_csv(rows: Iterable[SweepResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def _parse(col: str, s: str):
    if col in _INT_COLUMNS:
        return int(s) if s != "" else None
    if col in _FLOAT_COLUMNS:
        return float(s) if s != "" else None
    return s


def read_results_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_COLUMNS:
            raise FormatError(f"{path}: unexpected header {header}")
        return [SweepResult(**{c: _parse(c, s) for c, s in zip(header, row)})
                for row in reader]
