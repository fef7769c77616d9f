"""Command-line entry point: ``rfdepth <subcommand> [flags]``.

Exit status is 0 on success, 1 on usage errors and 2 on data or model
errors. Diagnostics go to stderr; results go to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import pickle
import sys
import warnings
from pathlib import Path

import numpy as np

from . import bench
from .cart import BEST_FIRST, FIFO, TreeConfig
from .ensemble import evaluate, fit_forest
from .errors import RFDepthError
from .randfs import RandFSConfig
from .resampling import BOOTSTRAP, NONE, SUBSAMPLE, derive_seed
from .synthgen import SETTINGS, SyntheticSpec, generate, snr_grid
from .tabular import (CLASSIFICATION, REGRESSION, binarize_label, load_delimited,
                      load_idx, write_delimited, write_results_csv)

log = logging.getLogger("rfdepth")

DEFAULT_SEED = 2021
THREADS_ENV = "RFDEPTH_THREADS"
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _int_list(s: str) -> list:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {s!r}")


def _snr_list(s: str) -> list:
    if s == "grid":
        return [float(v) for v in snr_grid()]
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of SNR values: {s!r}")


def _threads(s: str):
    if s == "auto":
        return os.cpu_count() or 1
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError("threads must be an integer or 'auto'")
    if v < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return v


def resolve_mtry(spec, p: int, task: str = REGRESSION) -> int:
    """``bagging`` -> p, ``default`` -> floor(p/3) (regression) or
    floor(sqrt(p)) (classification), floor 1; integers pass through."""
    if spec is None or spec == "default":
        if task == CLASSIFICATION:
            return max(1, int(np.sqrt(p)))
        return max(1, p // 3)
    if spec == "bagging":
        return p
    return int(spec)


def _add_common(sp):
    sp.add_argument("--config", help="JSON file of flag values (flags win)")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sp.add_argument("--threads", type=_threads, default=None,
                    help=f"worker threads or 'auto' (default ${THREADS_ENV} or 1)")
    sp.add_argument("-v", "--verbose", action="store_true")


def _add_problem(sp, snr_required=True):
    sp.add_argument("--setting", choices=sorted(SETTINGS))
    sp.add_argument("--n", type=int)
    sp.add_argument("--p", type=int)
    sp.add_argument("--s", type=int)
    sp.add_argument("--rho", type=float, default=0.35)
    sp.add_argument("--snr", type=_snr_list, required=snr_required,
                    help="comma list of SNRs, or 'grid' for the 10-point grid")
    sp.add_argument("--test-size", type=int)


def _add_tree(sp, trees=500):
    sp.add_argument("--mtry", default=None,
                    help="integer, 'default' (p/3) or 'bagging' (p)")
    sp.add_argument("--nodesize", type=int, default=None)
    sp.add_argument("--maxnodes", type=int, default=None)
    sp.add_argument("--trees", type=int, default=trees)
    sp.add_argument("--resample", choices=[BOOTSTRAP, SUBSAMPLE, NONE],
                    default=BOOTSTRAP)
    sp.add_argument("--subsample-size", type=int)
    sp.add_argument("--growth-order", choices=[FIFO, BEST_FIRST], default=FIFO)
    sp.add_argument("--package-defaults", action="store_true",
                    help="nodesize 5 (regression) / 1 (classification) and "
                         "mtry p/3 / sqrt(p) unless given")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rfdepth", description="Random forests with controllable tree depth and SNR sweeps.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    sp = sub.add_parser("synth", help="write a generated problem as CSV")
    _add_common(sp)
    _add_problem(sp)
    sp.add_argument("--out-dir", required=True)

    sp = sub.add_parser("fit", help="fit a forest on a CSV file")
    _add_common(sp)
    _add_tree(sp)
    sp.add_argument("--train", required=True)
    sp.add_argument("--response", default="y")
    sp.add_argument("--task", choices=[REGRESSION, CLASSIFICATION],
                    default=REGRESSION)
    sp.add_argument("--model", required=True, help="output model file")

    sp = sub.add_parser("predict", help="predict with a fitted forest")
    _add_common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--response", default="y")
    sp.add_argument("--out", help="prediction CSV (default stdout)")

    sp = sub.add_parser("sweep-depth", help="test MSE versus maxnodes")
    _add_common(sp)
    _add_problem(sp)
    _add_tree(sp)
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--maxnodes-grid", type=_int_list)
    sp.add_argument("--mtry-grid", default="bagging,default",
                    help="comma list of mtry values")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("tune-nodesize", help="optimal nodesize per repetition")
    _add_common(sp)
    _add_problem(sp)
    _add_tree(sp)
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--nodesize-grid", type=_int_list)
    sp.add_argument("--out", required=True)
    sp.add_argument("--optima-out",
                    help="CSV of per-repetition optima (default stdout)")

    sp = sub.add_parser("double-descent",
                        help="single-tree then number-of-trees sweep")
    _add_common(sp)
    _add_tree(sp, trees=None)
    sp.add_argument("--mnist-dir", help="directory holding the four IDX files")
    sp.add_argument("--positive-class", type=int, default=1)
    sp.add_argument("--size", type=int, default=2000,
                    help="train/validation/test size drawn from MNIST")
    sp.add_argument("--label-noise", type=_int_list, metavar="N,P",
                    help="synthetic binary problem with Bayes error --flip")
    sp.add_argument("--flip", type=float, default=0.2)
    sp.add_argument("--task", choices=[REGRESSION, CLASSIFICATION],
                    default=CLASSIFICATION)
    sp.add_argument("--policy", choices=[bench.FULL_DEPTH, bench.TUNED,
                                         bench.SHALLOW], default=bench.FULL_DEPTH)
    sp.add_argument("--phase1", type=_int_list)
    sp.add_argument("--phase2", type=_int_list,
                    default=[1, 2, 5, 10, 20, 50, 100, 200, 500])
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("randfs", help="RandFS ensembles versus depth")
    _add_common(sp)
    _add_problem(sp)
    sp.add_argument("--depths", type=_int_list)
    sp.add_argument("--mtry-grid", default="default,bagging")
    sp.add_argument("--members", type=int, default=100)
    sp.add_argument("--resample", choices=[NONE, BOOTSTRAP], default=NONE)
    sp.add_argument("--reps", type=int, default=100)
    sp.add_argument("--out", required=True)
    return parser


def _config_path(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    return pre.parse_known_args(argv)[0].config


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    path = _config_path(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if path and command:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}")
        if not isinstance(cfg, dict):
            raise UsageError(f"config {path} must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[command]
        known = {a.dest: a for a in sub._actions}
        unknown = set(cfg) - set(known)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        for key in cfg:
            known[key].required = False
        sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def _problem_dims(args):
    if args.setting:
        n, p, s = SETTINGS[args.setting]
    else:
        n, p, s = None, None, None
    n = args.n or n
    p = args.p or p
    s = args.s or s
    if None in (n, p, s):
        raise UsageError("give --setting or all of --n, --p, --s")
    return n, p, s


def _setting_label(args, n, p, s):
    return args.setting or f"n={n},p={p},s={s}"


def _tree_cfg(args, p, task=REGRESSION, mtry=None) -> TreeConfig:
    nodesize = args.nodesize
    mtry_spec = args.mtry if mtry is None else mtry
    if args.package_defaults:
        if nodesize is None:
            nodesize = 5 if task == REGRESSION else 1
        if mtry_spec is None:
            mtry_spec = "default"
    if mtry_spec is None:
        mtry_spec = "default"
    return TreeConfig(task=task, mtry=resolve_mtry(mtry_spec, p, task),
                      nodesize=nodesize or 1, maxnodes=args.maxnodes,
                      growth_order=args.growth_order, resample=args.resample,
                      subsample_size=args.subsample_size)


def _check_inputs(args):
    for name in ("train", "data", "model", "mnist_dir"):
        path = getattr(args, name, None)
        if name == "model" and args.command == "fit":
            continue
        if path and not Path(path).exists():
            raise UsageError(f"--{name.replace('_', '-')}: {path} does not exist")


def cmd_synth(args):
    n, p, s = _problem_dims(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for snr in args.snr:
        g = generate(SyntheticSpec(n=n, p=p, s=s, snr=snr, rho=args.rho,
                                   test_size=args.test_size, seed=args.seed))
        tag = f"snr{snr:g}"
        write_delimited(g.train, out / f"train_{tag}.csv")
        write_delimited(g.test, out / f"test_{tag}.csv")
        print(f"{tag},sigma2={g.sigma2!r},signal={g.signal!r}")


def cmd_fit(args):
    d = load_delimited(args.train, args.response, args.task)
    cfg = _tree_cfg(args, d.p, args.task)
    f = fit_forest(d, cfg, args.trees, args.seed, threads=args.threads)
    with open(args.model, "wb") as fh:
        pickle.dump(f, fh)
    loss = evaluate(f.predict(d.features), d.response, d.task)
    print(f"train_loss,{loss!r}")


def cmd_predict(args):
    with open(args.model, "rb") as fh:
        f = pickle.load(fh)
    d = load_delimited(args.data, args.response, f.task)
    pred = f.predict(d.features)
    lines = ["prediction"] + [repr(float(v)) if f.task == REGRESSION
                              else str(int(v)) for v in pred]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"test_loss,{evaluate(pred, d.response, f.task)!r}")
    else:
        sys.stdout.write(text)


def _synthetic(args, test_size=None, **kw):
    n, p, s = _problem_dims(args)
    return n, p, s, [SyntheticSpec(n=n, p=p, s=s, snr=snr, rho=args.rho,
                                   test_size=args.test_size or test_size, **kw)
                     for snr in args.snr]


def cmd_sweep_depth(args):
    n, p, s, specs = _synthetic(args)
    mtrys = sorted({resolve_mtry(m, p) for m in args.mtry_grid.split(",")})
    grid = {"mtry": mtrys, "maxnodes": args.maxnodes_grid or bench.maxnodes_grid(n)}
    rows = []
    for i, spec in enumerate(specs):
        sweep = bench.SweepSpec(
            problem=spec, family=bench.ForestFamily(_tree_cfg(args, p), args.trees),
            grid=grid, reps=args.reps, master_seed=derive_seed(args.seed, i),
            experiment="depth", setting=_setting_label(args, n, p, s),
            threads=args.threads)
        rows += bench.run_depth_sweep(sweep)
    write_results_csv(rows, args.out)


def cmd_tune_nodesize(args):
    n, p, s, specs = _synthetic(args, test_size=1000)
    interior = 25 if args.setting == "medium" else 10
    grid = {"nodesize": args.nodesize_grid or bench.nodesize_grid(n, interior)}
    rows, optima = [], ["snr,rep,optimal_nodesize"]
    for i, spec in enumerate(specs):
        sweep = bench.SweepSpec(
            problem=spec, family=bench.ForestFamily(_tree_cfg(args, p), args.trees),
            grid=grid, reps=args.reps, master_seed=derive_seed(args.seed, i),
            experiment="nodesize", setting=_setting_label(args, n, p, s),
            threads=args.threads)
        res = bench.tune_nodesize(sweep)
        rows += res.rows
        optima += [f"{spec.snr!r},{r},{v}" for r, v in enumerate(res.optimal)]
    write_results_csv(rows, args.out)
    text = "\n".join(optima) + "\n"
    if args.optima_out:
        Path(args.optima_out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _mnist_source(args):
    root = Path(args.mnist_dir)
    pools = {}
    for part, (img, lab) in MNIST_FILES.items():
        paths = []
        for stem in (img, lab):
            cands = [root / stem, root / f"{stem}.gz"]
            hit = next((c for c in cands if c.exists()), None)
            if hit is None:
                raise UsageError(f"{root} lacks {stem}[.gz]")
            paths.append(hit)
        pools[part] = binarize_label(load_idx(*paths), args.positive_class)
    size = args.size
    return bench.PoolSource(pools["train"], pools["test"], (size, size, size),
                            "mnist")


def cmd_double_descent(args):
    if args.mnist_dir:
        problem = _mnist_source(args)
        n, p = args.size, problem.train_pool.p
        label = f"mnist-{args.task}-{args.resample}"
    else:
        if args.label_noise and len(args.label_noise) != 2:
            raise UsageError("--label-noise takes N,P")
        n, p = args.label_noise or (500, 20)
        problem = bench.LabelNoiseSpec(n, p, args.flip, validation_size=n)
        label = f"label-noise-{args.task}-{args.resample}"
    cfg = _tree_cfg(args, p, args.task)
    phase1 = args.phase1 or bench.maxnodes_grid(n)
    sweep = bench.SweepSpec(problem=problem, family=bench.ForestFamily(cfg, 1),
                            reps=args.reps, master_seed=args.seed,
                            experiment="double-descent", setting=label,
                            threads=args.threads)
    rows = bench.run_double_descent(sweep, phase1, args.phase2, args.policy)
    write_results_csv(rows, args.out)


def cmd_randfs(args):
    n, p, s, specs = _synthetic(args)
    mtrys = sorted({resolve_mtry(m, p) for m in args.mtry_grid.split(",")})
    depths = args.depths or list(range(1, min(p, n - 1) + 1))
    rows = []
    for i, spec in enumerate(specs):
        cfg = RandFSConfig(depth=depths[0], n_members=args.members,
                           resample=args.resample)
        sweep = bench.SweepSpec(
            problem=spec, family=bench.RandFSFamily(cfg),
            grid={"mtry": mtrys, "depth": depths}, reps=args.reps,
            master_seed=derive_seed(args.seed, i), experiment="randfs",
            setting=_setting_label(args, n, p, s), threads=args.threads)
        rows += bench.run_randfs_sweep(sweep)
    write_results_csv(rows, args.out)


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "sweep-depth": cmd_sweep_depth,
    "tune-nodesize": cmd_tune_nodesize,
    "double-descent": cmd_double_descent,
    "randfs": cmd_randfs,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        _check_inputs(args)
        with warnings.catch_warnings():
            warnings.simplefilter("always", bench.SweepWarning)
            COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (RFDepthError, OSError, pickle.UnpicklingError) as exc:
        print(f"rfdepth: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
