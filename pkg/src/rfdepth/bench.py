"""Experiment sweeps: tree depth, optimal nodesize, and double descent.

Every repetition regenerates (or resamples) its data from a seed derived
from ``(master_seed, rep)``; within a repetition all grid points share one
forest seed, so grid points are compared on common random numbers.
Repetitions may run on worker threads; results are gathered in repetition
order so the output never depends on the schedule.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .cart import TreeConfig
from .ensemble import aggregate, evaluate, fit_forest, map_ordered
from .errors import DomainError, RFDepthError
from .randfs import RandFSConfig, fit_randfs
from .resampling import derive_seed
from .synthgen import SyntheticSpec, generate, label_noise_problem
from .tabular import (Dataset, SplitPlan, SweepResult,
                      subsample_splits)

log = logging.getLogger(__name__)

FULL_DEPTH = "full"
TUNED = "tuned"
SHALLOW = "shallow"
SHALLOW_MAXNODES = 10


class SweepWarning(UserWarning):
    """Some grid points failed and were left out of the averages."""


@dataclass(frozen=True)
class LabelNoiseSpec:
    """Binary problem with Bayes error ``flip`` (see synthgen)."""

    n: int
    p: int
    flip: float = 0.2
    test_size: Optional[int] = None
    validation_size: int = 0


@dataclass(frozen=True, eq=False)
class PoolSource:
    """Train/validation/test drawn per repetition from two loaded pools."""

    train_pool: Dataset
    test_pool: Dataset
    sizes: tuple
    name: str = "pool"


Problem = Union[SyntheticSpec, LabelNoiseSpec, PoolSource]


@dataclass(frozen=True)
class ForestFamily:
    cfg: TreeConfig
    n_trees: int = 500


@dataclass(frozen=True)
class RandFSFamily:
    cfg: RandFSConfig


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep, on which data, how often.

    ``grid`` maps parameter names (``maxnodes``, ``nodesize``, ``mtry``,
    ``n_trees`` for forests; ``depth`` and ``mtry`` for RandFS) to value
    lists; parameters absent from the grid come from the family template.
    """

    problem: Problem
    family: Union[ForestFamily, RandFSFamily]
    grid: dict = field(default_factory=dict)
    reps: int = 100
    master_seed: int = 0
    experiment: str = "sweep"
    setting: str = ""
    threads: Optional[int] = None

    def __post_init__(self):
        if self.reps < 1:
            raise DomainError("reps must be >= 1")


def maxnodes_grid(n: int) -> list:
    """2, 4, 6, 8, 10, then steps of 5 up to n/2, then steps of 25 up to n."""
    half = n // 2
    vals = [2, 4, 6, 8, 10] + list(range(15, half + 1, 5))
    vals.append(half)
    vals += list(range(half + 25, n + 1, 25))
    vals.append(n)
    return sorted({v for v in vals if 2 <= v <= n})


def nodesize_grid(n: int, n_interior: int = 10) -> list:
    """1, 3 and ``n_interior`` values equally spaced from 5 to n/2."""
    interior = np.rint(np.linspace(5, n / 2, n_interior)).astype(int)
    return sorted({1, 3, *interior.tolist()})


def realize(problem: Problem, seed: int):
    """Draw ``(train, validation_or_None, test)`` for one repetition."""
    if isinstance(problem, SyntheticSpec):
        g = generate(replace(problem, seed=seed))
        return g.train, g.validation, g.test
    if isinstance(problem, LabelNoiseSpec):
        return label_noise_problem(problem.n, problem.p, problem.flip,
                                   problem.test_size, problem.validation_size,
                                   seed)
    if isinstance(problem, PoolSource):
        return subsample_splits(problem.train_pool, problem.test_pool,
                                SplitPlan(problem.name, problem.sizes, seed))
    raise DomainError(f"unsupported problem type {type(problem).__name__}")


def _problem_snr(problem) -> Optional[float]:
    return getattr(problem, "snr", None)


def _points(grid: dict, keys: Sequence[str]) -> list:
    present = [k for k in keys if k in grid]
    combos = itertools.product(*(list(grid[k]) for k in present))
    return [dict(zip(present, c)) for c in combos]


def _summarize(losses: np.ndarray):
    """Mean and standard error of the finite entries."""
    ok = losses[np.isfinite(losses)]
    if ok.size == 0:
        return 0, math.nan, math.nan
    se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
    return int(ok.size), float(ok.mean()), se


def _rows(spec: SweepSpec, points, train_losses, test_losses, fixed):
    rows = []
    failures = int(np.sum(~np.isfinite(test_losses)))
    if failures:
        warnings.warn(f"{failures} fits failed and were excluded",
                      SweepWarning, stacklevel=3)
    for j, pt in enumerate(points):
        count, mean_test, se = _summarize(test_losses[:, j])
        _, mean_train, _ = _summarize(train_losses[:, j])
        vals = {**fixed, **pt}
        rows.append(SweepResult(
            experiment=spec.experiment, setting=spec.setting,
            snr=_problem_snr(spec.problem), mtry=vals.get("mtry"),
            maxnodes=vals.get("maxnodes"), nodesize=vals.get("nodesize"),
            n_trees=vals.get("n_trees"), rep_count=count,
            mean_train_loss=mean_train, mean_test_loss=mean_test,
            se_test_loss=se))
    return rows


def _forest_cfg(template: TreeConfig, p: int, pt: dict) -> TreeConfig:
    kw = {k: pt[k] for k in ("maxnodes", "nodesize", "mtry") if k in pt}
    cfg = replace(template, **kw)
    cfg.mtry_for(p)
    return cfg


def _fixed_forest_fields(family: ForestFamily, p: int) -> dict:
    cfg = family.cfg
    return {"mtry": cfg.mtry_for(p), "maxnodes": cfg.maxnodes,
            "nodesize": cfg.nodesize, "n_trees": family.n_trees}


def _forest_losses(train, test, cfg, n_trees, seed, threads=1):
    f = fit_forest(train, cfg, n_trees, seed, threads=threads)
    return (evaluate(f.predict(train.features), train.response, train.task),
            evaluate(f.predict(test.features), test.response, test.task))


def _sweep_forests(spec: SweepSpec, keys):
    if not isinstance(spec.family, ForestFamily):
        raise DomainError("this sweep needs a forest family")
    points = _points(spec.grid, keys)

    def one_rep(r):
        train, _, test = realize(spec.problem,
                                 derive_seed(spec.master_seed, r, 0))
        seed = derive_seed(spec.master_seed, r, 1)
        tr = np.full(len(points), np.nan)
        te = np.full(len(points), np.nan)
        for j, pt in enumerate(points):
            try:
                cfg = _forest_cfg(spec.family.cfg, train.p, pt)
                tr[j], te[j] = _forest_losses(
                    train, test, cfg, pt.get("n_trees", spec.family.n_trees),
                    seed)
            except RFDepthError as exc:
                log.warning("rep %d point %s failed: %s", r, pt, exc)
        return tr, te, train.p

    out = map_ordered(one_rep, range(spec.reps), spec.threads)
    train_l = np.array([o[0] for o in out])
    test_l = np.array([o[1] for o in out])
    fixed = _fixed_forest_fields(spec.family, out[0][2])
    return points, train_l, test_l, fixed


def run_depth_sweep(spec: SweepSpec) -> list:
    """Mean/SE of train and test loss per (mtry, maxnodes[, n_trees]) point."""
    if "maxnodes" not in spec.grid:
        raise DomainError("a depth sweep needs a maxnodes grid")
    points, tr, te, fixed = _sweep_forests(
        spec, ("mtry", "n_trees", "maxnodes"))
    return _rows(spec, points, tr, te, fixed)


@dataclass(frozen=True)
class NodesizeTuning:
    """Per-repetition optimal nodesize plus the per-nodesize averages."""

    optimal: tuple
    rows: tuple


def tune_nodesize(spec: SweepSpec) -> NodesizeTuning:
    """For each repetition, the nodesize with the smallest test loss.

    Trees grow as deep as ``nodesize`` allows. Ties go to the smallest
    nodesize; repetitions where every fit failed are dropped.
    """
    if "nodesize" not in spec.grid:
        raise DomainError("nodesize tuning needs a nodesize grid")
    grid = dict(spec.grid)
    grid["nodesize"] = sorted(grid["nodesize"])
    spec = replace(spec, grid=grid,
                   family=replace(spec.family,
                                  cfg=replace(spec.family.cfg, maxnodes=None)))
    points, tr, te, fixed = _sweep_forests(spec, ("mtry", "nodesize"))
    sizes = np.array([pt["nodesize"] for pt in points])
    optimal = []
    for row in te:
        if np.all(np.isnan(row)):
            continue
        optimal.append(int(sizes[np.nanargmin(row)]))
    return NodesizeTuning(tuple(optimal),
                          tuple(_rows(spec, points, tr, te, fixed)))


def run_randfs_sweep(spec: SweepSpec) -> list:
    """Train/test MSE of RandFS ensembles per (mtry, depth) point.

    The depth ``d`` is reported in the ``maxnodes`` column.
    """
    if not isinstance(spec.family, RandFSFamily):
        raise DomainError("run_randfs_sweep needs a RandFS family")
    points = _points(spec.grid, ("mtry", "depth"))

    def one_rep(r):
        train, _, test = realize(spec.problem,
                                 derive_seed(spec.master_seed, r, 0))
        seed = derive_seed(spec.master_seed, r, 1)
        tr = np.full(len(points), np.nan)
        te = np.full(len(points), np.nan)
        for j, pt in enumerate(points):
            try:
                cfg = replace(spec.family.cfg, seed=seed, **pt)
                m = fit_randfs(train, cfg, threads=1)
                tr[j] = evaluate(m.predict(train.features), train.response)
                te[j] = evaluate(m.predict(test.features), test.response)
            except (RFDepthError, np.linalg.LinAlgError) as exc:
                log.warning("rep %d point %s failed: %s", r, pt, exc)
        return tr, te

    out = map_ordered(one_rep, range(spec.reps), spec.threads)
    tr = np.array([o[0] for o in out])
    te = np.array([o[1] for o in out])
    cfg = spec.family.cfg
    fixed = {"mtry": cfg.mtry, "maxnodes": cfg.depth,
             "n_trees": cfg.n_members}
    points = [{("maxnodes" if k == "depth" else k): v for k, v in pt.items()}
              for pt in points]
    return _rows(spec, points, tr, te, fixed)


def run_double_descent(spec: SweepSpec, phase1_maxnodes: Sequence[int],
                       phase2_counts: Sequence[int],
                       depth_policy: str = FULL_DEPTH) -> list:
    """Single-tree complexity sweep followed by a number-of-trees sweep.

    Phase 1 grows one randomized tree per repetition and records its losses
    at each ``maxnodes``; because growth is first-in-first-out and the split
    budget is checked before any random draw, these are nested prefixes of
    one tree. Phase 2 fixes ``maxnodes`` by ``depth_policy`` (``full``: the
    training size, ``tuned``: the phase-1 value with the lowest validation
    loss, ``shallow``: 10) and evaluates forests of each size in
    ``phase2_counts``; the forest of B trees is the first B trees of the
    largest forest.
    """
    if not isinstance(spec.family, ForestFamily):
        raise DomainError("double descent needs a forest family")
    if depth_policy not in (FULL_DEPTH, TUNED, SHALLOW):
        raise DomainError(f"unknown depth policy {depth_policy!r}")
    m1 = sorted(int(m) for m in phase1_maxnodes)
    counts = sorted(int(b) for b in phase2_counts)
    if not m1 or m1[0] < 2:
        raise DomainError("phase-1 maxnodes values must be >= 2")
    if not counts or counts[0] < 1:
        raise DomainError("phase-2 tree counts must be >= 1")
    template = spec.family.cfg

    def one_rep(r):
        train, val, test = realize(spec.problem,
                                   derive_seed(spec.master_seed, r, 0))
        if m1[-1] > train.n:
            raise DomainError(f"phase-1 maxnodes exceed n={train.n}")
        if depth_policy == TUNED and val is None:
            raise DomainError("the tuned policy needs a validation set")
        task = template.task
        train, test = train.as_task(task), test.as_task(task)
        seed1 = derive_seed(spec.master_seed, r, 1)
        p1 = np.empty((3, len(m1)))
        for j, m in enumerate(m1):
            f = fit_forest(train, replace(template, maxnodes=m), 1, seed1,
                           threads=1)
            p1[0, j] = evaluate(f.predict(train.features), train.response, task)
            p1[1, j] = evaluate(f.predict(test.features), test.response, task)
            if val is not None:
                v = val.as_task(task)
                p1[2, j] = evaluate(f.predict(v.features), v.response, task)
            else:
                p1[2, j] = np.nan
        if depth_policy == FULL_DEPTH:
            depth = train.n
        elif depth_policy == SHALLOW:
            depth = SHALLOW_MAXNODES
        else:
            depth = m1[int(np.argmin(p1[2]))]
        f = fit_forest(train, replace(template, maxnodes=depth), counts[-1],
                       derive_seed(spec.master_seed, r, 2), threads=1)
        tp_tr = f.tree_predictions(train.features)
        tp_te = f.tree_predictions(test.features)
        p2 = np.empty((2, len(counts)))
        for j, b in enumerate(counts):
            p2[0, j] = evaluate(aggregate(tp_tr[:b], task, f.n_classes),
                                train.response, task)
            p2[1, j] = evaluate(aggregate(tp_te[:b], task, f.n_classes),
                                test.response, task)
        return p1, p2, depth, template.mtry_for(train.p)

    out = map_ordered(one_rep, range(spec.reps), spec.threads)
    depths = sorted({o[2] for o in out})
    mtry = out[0][3]
    base = {"mtry": mtry, "nodesize": template.nodesize}
    prefix = f"{spec.setting}-" if spec.setting else ""
    s1 = replace(spec, setting=f"{prefix}phase1")
    rows = _rows(s1, [{"maxnodes": m, "n_trees": 1} for m in m1],
                 np.array([o[0][0] for o in out]),
                 np.array([o[0][1] for o in out]), base)
    s2 = replace(spec, setting=f"{prefix}phase2-{depth_policy}")
    fixed2 = {**base, "maxnodes": depths[0] if len(depths) == 1 else None}
    rows += _rows(s2, [{"n_trees": b} for b in counts],
                  np.array([o[1][0] for o in out]),
                  np.array([o[1][1] for o in out]), fixed2)
    return rows
