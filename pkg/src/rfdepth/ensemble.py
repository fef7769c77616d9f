"""Forests of B trees: fitting, aggregation, losses and interpolation.

Tree ``b`` of a forest is grown with its own generator derived from
``(master_seed, b)``, so a forest is reproducible bit for bit whatever the
number of worker threads, and the first ``k`` trees of a B-tree forest are
exactly the k-tree forest with the same seed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from .cart import TreeConfig, _as_matrix, grow_tree
from .errors import CapacityError, DomainError
from .resampling import ResampleDraw, resample, task_rng
from .tabular import CLASSIFICATION, REGRESSION, Dataset

REGRESSION_INTERPOLATION_ATOL = 1e-12
MAX_ENUMERATED_SUBSAMPLES = 10 ** 5


def default_threads() -> int:
    """Worker count from ``RFDEPTH_THREADS``, else 1."""
    env = os.environ.get("RFDEPTH_THREADS", "").strip()
    if env == "":
        return 1
    if env == "auto":
        return os.cpu_count() or 1
    return max(1, int(env))


def map_ordered(fn, items, threads: Optional[int] = None) -> list:
    """``[fn(x) for x in items]``, possibly spread over a thread pool."""
    threads = default_threads() if threads is None else threads
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple
    cfg: TreeConfig
    master_seed: int
    n_features: int
    n_classes: Optional[int] = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def task(self) -> str:
        return self.cfg.task

    def head(self, k: int) -> "Forest":
        """The forest made of the first ``k`` trees."""
        if not 1 <= k <= self.n_trees:
            raise DomainError(f"k={k} not in 1..{self.n_trees}")
        return Forest(self.trees[:k], self.cfg, self.master_seed,
                      self.n_features, self.n_classes)

    def tree_predictions(self, X) -> np.ndarray:
        """(B, n) matrix of per-tree predictions."""
        X = _as_matrix(X, self.n_features)
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        return aggregate(self.tree_predictions(X), self.task, self.n_classes)

    def __call__(self, X) -> np.ndarray:
        return self.predict(X)


def aggregate(tree_preds: np.ndarray, task: str,
              n_classes: Optional[int] = None) -> np.ndarray:
    """Average (regression) or plurality vote (classification) over axis 0.

    Vote ties go to the lowest class index.
    """
    if task == REGRESSION:
        return tree_preds.mean(axis=0)
    k = n_classes if n_classes is not None else int(tree_preds.max()) + 1
    votes = np.zeros((tree_preds.shape[1], k), dtype=np.int64)
    cols = np.arange(tree_preds.shape[1])
    for row in tree_preds.astype(np.int64):
        votes[cols, row] += 1
    return votes.argmax(axis=1)


def fit_forest(d: Dataset, cfg: TreeConfig, n_trees: int, master_seed: int,
               threads: Optional[int] = None,
               draws: Optional[Sequence] = None) -> Forest:
    """Fit ``n_trees`` trees, tree ``b`` on its own resample of ``d``.

    ``draws`` optionally fixes the row indices of every tree (one sequence
    per tree) instead of resampling per ``cfg.resample``.
    """
    if n_trees < 1:
        raise DomainError("a forest needs at least one tree")
    if draws is not None and len(draws) != n_trees:
        raise DomainError("need exactly one draw per tree")
    cfg.check(d)

    def one(b):
        rng = task_rng(master_seed, b)
        return grow_tree(d, cfg, rng,
                         None if draws is None else draws[b])

    trees = map_ordered(one, range(n_trees), threads)
    return Forest(tuple(trees), cfg, int(master_seed), d.p, d.n_classes)


def predict_forest(f: Forest, x):
    """Forest prediction for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("predict_forest takes one feature vector")
    out = f.predict(x)[0]
    return int(out) if f.task == CLASSIFICATION else float(out)


def evaluate(predictions, truth, task: str = REGRESSION) -> float:
    """Mean squared error (regression) or misclassification rate."""
    pred = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if pred.shape != y.shape:
        raise DomainError(
            f"prediction shape {pred.shape} != truth shape {y.shape}")
    if pred.size == 0:
        raise DomainError("cannot evaluate an empty prediction vector")
    if task == REGRESSION:
        return float(np.mean((pred - y) ** 2))
    if task == CLASSIFICATION:
        return float(np.mean(pred != y))
    raise DomainError(f"unknown task {task!r}")


def _predictor(model) -> Callable:
    return model.predict if hasattr(model, "predict") else model


def is_interpolating(model, d: Dataset) -> bool:
    """True iff the model reproduces every training response.

    Classification labels must match exactly; regression predictions within
    an absolute 1e-12.
    """
    pred = np.asarray(_predictor(model)(d.features), dtype=np.float64)
    if d.task == CLASSIFICATION:
        return bool(np.all(pred == d.response))
    return bool(np.all(np.abs(pred - d.response)
                       <= REGRESSION_INTERPOLATION_ATOL))


def all_subsamples(n: int, k: int) -> list:
    """Every size-``k`` subset of ``range(n)`` as sorted index arrays."""
    total = math.comb(n, k)
    if total > MAX_ENUMERATED_SUBSAMPLES:
        raise CapacityError(
            f"C({n},{k}) = {total} subsamples exceeds the enumeration limit "
            f"of {MAX_ENUMERATED_SUBSAMPLES}")
    return [np.array(c, dtype=np.int64) for c in combinations(range(n), k)]


def complete_u_statistic(d: Dataset, k: int, kernel_cfg: TreeConfig,
                         x) -> float:
    """Average of the tree kernel's prediction at ``x`` over all C(n, k)
    subsamples drawn without replacement.

    The kernel must be deterministic (``mtry`` equal to p), so the result
    does not depend on any seed.
    """
    if not 1 <= k <= d.n:
        raise DomainError(f"subsample size {k} not in 1..{d.n}")
    if kernel_cfg.mtry_for(d.p) != d.p:
        raise DomainError("the U-statistic kernel needs mtry = p")
    x = _as_matrix(x, d.p)
    rng = np.random.default_rng(0)
    total = 0.0
    subsets = all_subsamples(d.n, k)
    for idx in subsets:
        total += float(grow_tree(d, kernel_cfg, rng, indices=idx).predict(x)[0])
    return total / len(subsets)


__all__ = [
    "Forest", "ResampleDraw", "aggregate", "all_subsamples",
    "complete_u_statistic", "default_threads", "evaluate", "fit_forest",
    "is_interpolating", "predict_forest", "resample",
]
