"""Row resampling for individual trees and per-task random streams."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError

BOOTSTRAP = "bootstrap"
SUBSAMPLE = "subsample"
NONE = "none"
RESAMPLE_MODES = (BOOTSTRAP, SUBSAMPLE, NONE)


@dataclass(frozen=True, eq=False)
class ResampleDraw:
    indices: np.ndarray
    mode: str


def resample(n: int, mode: str, rng: np.random.Generator,
             size: Optional[int] = None) -> ResampleDraw:
    """Draw training rows for one tree.

    ``bootstrap`` takes n rows with replacement, ``subsample`` takes ``size``
    distinct rows, ``none`` returns ``0..n-1``. Indices come back sorted.
    """
    if n < 1:
        raise DomainError("resample needs n >= 1")
    if mode == NONE:
        idx = np.arange(n, dtype=np.int64)
    elif mode == BOOTSTRAP:
        idx = np.sort(rng.integers(0, n, size=n, dtype=np.int64))
    elif mode == SUBSAMPLE:
        if size is None or not 1 <= size <= n:
            raise DomainError(f"subsample size {size} not in 1..{n}")
        idx = np.sort(rng.choice(n, size=size, replace=False)).astype(np.int64)
    else:
        raise DomainError(f"unknown resample mode {mode!r}")
    return ResampleDraw(idx, mode)


def task_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for task ``key`` under a master ``seed``.

    Streams depend only on (seed, key), never on which worker runs the task
    or in what order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed for task ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))
