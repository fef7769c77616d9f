"""Single CART trees grown cell by cell under nodesize/maxnodes limits.

Growth processes a list of open cells. A cell becomes a leaf when it holds
fewer than ``nodesize`` points, all its feature rows are equal, its response
is constant, no positive-gain split exists among the candidate features, or
the split budget (``maxnodes - 1``) is spent. Otherwise it is cut at the best
CART split over ``mtry`` features drawn uniformly without replacement and both
children are appended to the list.

Regression cells are scored by the sum of squared deviations from the cell
mean, classification cells by the cell-size-weighted Gini index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .errors import DomainError
from .resampling import BOOTSTRAP, NONE, RESAMPLE_MODES, SUBSAMPLE, resample
from .tabular import CLASSIFICATION, REGRESSION, TASKS, Dataset

FIFO = "fifo"
BEST_FIRST = "best_first"
GROWTH_ORDERS = {FIFO: _kernels.FIFO, BEST_FIRST: _kernels.BEST_FIRST}


@dataclass(frozen=True)
class TreeConfig:
    """Growth hyperparameters shared by every tree of a forest.

    ``mtry=None`` means all features; ``maxnodes=None`` means unlimited.
    ``subsample_size`` is required when ``resample == "subsample"``.
    """

    task: str = REGRESSION
    mtry: Optional[int] = None
    nodesize: int = 1
    maxnodes: Optional[int] = None
    growth_order: str = FIFO
    resample: str = BOOTSTRAP
    subsample_size: Optional[int] = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise DomainError(f"unknown task {self.task!r}")
        if self.mtry is not None and self.mtry < 1:
            raise DomainError("mtry must be >= 1")
        if self.nodesize < 1:
            raise DomainError("nodesize must be >= 1")
        if self.maxnodes is not None and self.maxnodes < 1:
            raise DomainError("maxnodes must be >= 1")
        if self.growth_order not in GROWTH_ORDERS:
            raise DomainError(f"unknown growth order {self.growth_order!r}")
        if self.resample not in RESAMPLE_MODES:
            raise DomainError(f"unknown resample mode {self.resample!r}")
        if self.resample == SUBSAMPLE and (
                self.subsample_size is None or self.subsample_size < 1):
            raise DomainError("subsample mode needs subsample_size >= 1")

    def mtry_for(self, p: int) -> int:
        m = p if self.mtry is None else self.mtry
        if m > p:
            raise DomainError(f"mtry={m} exceeds p={p}")
        return m

    def check(self, d: Dataset) -> None:
        """Raise if this config cannot be fit on ``d``."""
        self.mtry_for(d.p)
        if d.task != self.task:
            raise DomainError(
                f"config task {self.task!r} != dataset task {d.task!r}")
        if self.resample == SUBSAMPLE and self.subsample_size > d.n:
            raise DomainError(
                f"subsample_size={self.subsample_size} exceeds n={d.n}")


@dataclass(frozen=True, eq=False)
class FittedTree:
    """An immutable fitted tree stored as parallel node arrays.

    Node 0 is the root. Internal nodes have ``feature >= 0`` and route
    ``x[feature] <= threshold`` to ``left``; leaves have ``feature == -1``.
    ``value`` holds the leaf mean (regression) or the majority class
    (classification, ties to the lowest class); ``counts`` holds per-class
    counts of the resampled points in each node.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    counts: Optional[np.ndarray]
    n_node_samples: np.ndarray
    task: str
    n_features: int
    n_classes: Optional[int] = None

    def __post_init__(self):
        for name in ("feature", "threshold", "left", "right", "value",
                     "counts", "n_node_samples"):
            a = getattr(self, name)
            if a is not None:
                a.setflags(write=False)

    @property
    def root(self) -> int:
        return 0

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def n_splits(self) -> int:
        return self.n_nodes - self.n_leaves

    def apply(self, X) -> np.ndarray:
        """Index of the leaf reached by each row of ``X``."""
        X = _as_matrix(X, self.n_features)
        return _kernels.apply(self.feature, self.threshold, self.left,
                              self.right, X)

    def predict(self, X) -> np.ndarray:
        """Leaf means, or leaf majority classes as int64."""
        out = self.value[self.apply(X)]
        if self.task == CLASSIFICATION:
            return out.astype(np.int64)
        return out

    def same_structure(self, other: "FittedTree") -> bool:
        return (self.n_nodes == other.n_nodes
                and np.array_equal(self.feature, other.feature)
                and np.array_equal(self.threshold, other.threshold)
                and np.array_equal(self.left, other.left)
                and np.array_equal(self.right, other.right))


def _as_matrix(X, p: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != p:
        raise DomainError(f"expected rows with {p} features, got {X.shape}")
    return np.ascontiguousarray(X)


def impurity(responses, task: str = REGRESSION) -> float:
    """Regression: sum of squared deviations; classification: m * Gini."""
    y = np.asarray(responses, dtype=np.float64)
    if y.size == 0:
        raise DomainError("impurity of an empty cell")
    if task == REGRESSION:
        return float(np.sum((y - y.mean()) ** 2))
    if task == CLASSIFICATION:
        _, counts = np.unique(y, return_counts=True)
        m = y.size
        return float(m - np.sum(counts.astype(np.float64) ** 2) / m)
    raise DomainError(f"unknown task {task!r}")


class Split(NamedTuple):
    feature: int
    threshold: float
    gain: float


def best_split(features, responses, candidate_features=None,
               task: str = REGRESSION, n_classes: Optional[int] = None
               ) -> Optional[Split]:
    """Best impurity-decreasing axis-aligned cut of one cell.

    Thresholds are midpoints between consecutive distinct values. Returns
    ``None`` when no cut leaves both sides nonempty with positive gain. Ties
    go to the lowest feature index, then the lowest threshold.
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.ascontiguousarray(responses, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DomainError("features must be n x p with n == len(responses)")
    if X.shape[0] < 2:
        raise DomainError("best_split needs a cell with at least 2 points")
    if candidate_features is None:
        candidate_features = np.arange(X.shape[1])
    feats = np.asarray(candidate_features, dtype=np.int64)
    k = 0
    if task == CLASSIFICATION:
        k = n_classes if n_classes is not None else int(y.max()) + 1
    f, thr, gain = _kernels.best_split_cell(
        X, y, k, np.arange(X.shape[0], dtype=np.int64), feats)
    if f < 0:
        return None
    return Split(int(f), float(thr), float(gain))


def grow_tree(d: Dataset, cfg: TreeConfig, rng: np.random.Generator,
              indices=None) -> FittedTree:
    """Grow one tree on ``d``.

    The resample is drawn from ``rng`` according to ``cfg.resample`` unless
    explicit row ``indices`` are given. The same generator is then used for
    the per-cell ``mtry`` draws, so equal generator states give identical
    trees.
    """
    cfg.check(d)
    if indices is None:
        indices = resample(d.n, cfg.resample, rng, cfg.subsample_size).indices
    draw = np.ascontiguousarray(indices, dtype=np.int64)
    if draw.size == 0:
        raise DomainError("cannot grow a tree on an empty resample")
    k = d.n_classes if d.task == CLASSIFICATION else 0
    max_splits = -1 if cfg.maxnodes is None else cfg.maxnodes - 1
    feature, threshold, left, right, value, counts, nns = _kernels.grow(
        d.features, d.response, k, draw, cfg.mtry_for(d.p), cfg.nodesize,
        max_splits, GROWTH_ORDERS[cfg.growth_order], rng)
    return FittedTree(feature, threshold, left, right, value,
                      counts if k else None, nns, d.task, d.p,
                      d.n_classes if k else None)


def predict_tree(t: FittedTree, x):
    """Prediction for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("predict_tree takes one feature vector")
    out = t.predict(x)[0]
    return int(out) if t.task == CLASSIFICATION else float(out)


__all__ = [
    "BEST_FIRST", "BOOTSTRAP", "FIFO", "NONE", "SUBSAMPLE", "FittedTree",
    "Split", "TreeConfig", "best_split", "grow_tree", "impurity",
    "predict_tree",
]
