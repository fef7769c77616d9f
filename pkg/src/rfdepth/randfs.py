"""Randomized forward selection (RandFS) ensembles of linear models.

Each member grows a linear model of ``depth`` terms. At every step only
``mtry`` of the not-yet-selected features, drawn uniformly, may enter; the
one whose addition gives the smallest residual sum of squares after a full
OLS refit is taken. The ensemble averages member intercepts and coefficients
(unselected coefficients count as 0), and ``gamma[j]`` is the fraction of
members that selected feature ``j``.

With orthonormal, centered columns every member's coefficient on a selected
feature equals the full OLS coefficient, so the ensemble coefficient is
exactly ``gamma[j] * beta_ols[j]``: averaging acts as per-feature shrinkage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ensemble import map_ordered
from .errors import DomainError, SingularDesignError
from .resampling import BOOTSTRAP, NONE, resample, task_rng
from .tabular import Dataset


@dataclass(frozen=True)
class RandFSConfig:
    depth: int
    mtry: Optional[int] = None
    n_members: int = 100
    resample: str = NONE
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise DomainError("depth must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise DomainError("mtry must be >= 1")
        if self.n_members < 1:
            raise DomainError("n_members must be >= 1")
        if self.resample not in (NONE, BOOTSTRAP):
            raise DomainError("RandFS resample must be 'none' or 'bootstrap'")

    def check(self, n: int, p: int) -> int:
        """Validate against an n x p problem and return the resolved mtry."""
        if self.depth > min(n - 1, p):
            raise DomainError(
                f"depth {self.depth} exceeds min(n-1, p) = {min(n - 1, p)}")
        m = p if self.mtry is None else self.mtry
        if m > p:
            raise DomainError(f"mtry={m} exceeds p={p}")
        return m


@dataclass(frozen=True, eq=False)
class Member:
    """One base learner: features in order of entry and its fitted model."""

    selected: tuple
    intercept: float
    coefficients: np.ndarray

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=np.float64) @ self.coefficients


@dataclass(frozen=True, eq=False)
class RandFSModel:
    intercept: float
    coefficients: np.ndarray
    gamma: np.ndarray
    members: tuple

    @property
    def n_members(self) -> int:
        return len(self.members)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.coefficients.shape[0]:
            raise DomainError(
                f"expected {self.coefficients.shape[0]} features, "
                f"got {X.shape[1]}")
        return self.intercept + X @ self.coefficients


def ols_fit(features, response):
    """Least squares with an intercept; returns ``(intercept, coefficients)``.

    Raises SingularDesignError when ``[1, features]`` is rank deficient.
    """
    y = np.asarray(response, dtype=np.float64)
    X = np.asarray(features, dtype=np.float64).reshape(y.shape[0], -1)
    A = np.column_stack([np.ones(y.shape[0]), X])
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        raise SingularDesignError(
            f"design with intercept has rank {rank} < {A.shape[1]} columns")
    return float(coef[0]), coef[1:]


def _rss(X, y, cols):
    b0, b = ols_fit(X[:, cols], y)
    r = y - b0 - X[:, cols] @ b
    return float(r @ r)


def forward_step(selected, candidates, d: Dataset) -> int:
    """The candidate whose addition to ``selected`` minimizes the refit RSS.

    Ties (within a relative 1e-12 of the total sum of squares) go to the
    lowest feature index. Candidates that make the design singular are
    skipped.
    """
    cands = sorted(int(c) for c in candidates)
    if not cands:
        raise DomainError("forward_step needs at least one candidate")
    sel = [int(s) for s in selected]
    if set(sel) & set(cands):
        raise DomainError("candidates overlap the current selection")
    X, y = d.features, d.response
    tol = 1e-12 * float(np.sum((y - y.mean()) ** 2))
    best, best_rss = None, np.inf
    for c in cands:
        try:
            rss = _rss(X, y, sel + [c])
        except SingularDesignError:
            continue
        if best is None or rss < best_rss - tol:
            best, best_rss = c, rss
    if best is None:
        raise SingularDesignError(
            f"every candidate in {cands} gives a singular design")
    return best


def _fit_member(d: Dataset, depth: int, mtry: int, rng) -> Member:
    p = d.p
    selected = []
    for _ in range(depth):
        avail = np.setdiff1d(np.arange(p), selected)
        k = min(mtry, avail.size)
        cands = avail if k == avail.size else rng.choice(avail, k, replace=False)
        selected.append(forward_step(selected, cands, d))
    b0, b = ols_fit(d.features[:, selected], d.response)
    coef = np.zeros(p)
    coef[selected] = b
    return Member(tuple(selected), b0, coef)


def fit_randfs(d_train: Dataset, cfg: RandFSConfig,
               threads: Optional[int] = None) -> RandFSModel:
    mtry = cfg.check(d_train.n, d_train.p)

    def one(b):
        rng = task_rng(cfg.seed, b)
        data = d_train
        if cfg.resample == BOOTSTRAP:
            data = d_train.take(resample(d_train.n, BOOTSTRAP, rng).indices)
        return _fit_member(data, cfg.depth, mtry, rng)

    members = tuple(map_ordered(one, range(cfg.n_members), threads))
    B = len(members)
    coef = np.mean([m.coefficients for m in members], axis=0)
    intercept = float(np.mean([m.intercept for m in members]))
    counts = np.zeros(d_train.p)
    for m in members:
        counts[list(m.selected)] += 1
    return RandFSModel(intercept, coef, counts / B, members)


def predict_randfs(m: RandFSModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DomainError("predict_randfs takes one feature vector")
    return float(m.predict(x)[0])


def orthonormal_design(n: int, p: int, rng) -> np.ndarray:
    """Random n x p design with orthonormal columns that are also orthogonal
    to the intercept (n > p)."""
    if n <= p:
        raise DomainError("an orthonormal design needs n > p")
    Z = np.column_stack([np.ones(n), rng.standard_normal((n, p))])
    Q, _ = np.linalg.qr(Z)
    return Q[:, 1:]
