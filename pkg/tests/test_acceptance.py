"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import math

import numpy as np

from oracles import ar1_double_sum, brute_force_split
from rfdepth import bench
from rfdepth.cart import TreeConfig, best_split, grow_tree
from rfdepth.cli import main
from rfdepth.ensemble import (all_subsamples, complete_u_statistic, evaluate,
                              fit_forest, is_interpolating)
from rfdepth.randfs import RandFSConfig, fit_randfs, ols_fit, orthonormal_design
from rfdepth.synthgen import (SyntheticSpec, beta_type2, label_noise_problem,
                              make_sigma, quadratic_form, snr_grid)
from rfdepth.tabular import Dataset

SEED = 2021


def _depth_gap(snr):
    # a 1000-point test set per rep tightens the test-MSE estimate
    spec = bench.SweepSpec(
        problem=SyntheticSpec.from_setting("low", snr, test_size=1000),
        family=bench.ForestFamily(TreeConfig(mtry=10), 100),
        grid={"maxnodes": [4, 100]}, reps=50, master_seed=SEED)
    shallow, deep = bench.run_depth_sweep(spec)
    assert shallow.rep_count == deep.rep_count == 50
    return shallow, deep, math.hypot(shallow.se_test_loss, deep.se_test_loss)


def test_shallow_beats_deep_at_low_snr(criterion):
    shallow, deep, se = _depth_gap(0.05)
    gap = deep.mean_test_loss - shallow.mean_test_loss
    ok = criterion(1, gap > 2 * se,
                   f"SNR 0.05 MSE maxnodes=4 {shallow.mean_test_loss:.3f} vs "
                   f"maxnodes=100 {deep.mean_test_loss:.3f}, gap {gap:.3f} "
                   f"> 2*SE {2 * se:.3f}")
    assert ok


def test_deep_beats_shallow_at_high_snr(criterion):
    shallow, deep, se = _depth_gap(6.0)
    gap = shallow.mean_test_loss - deep.mean_test_loss
    ok = criterion(2, gap > 2 * se,
                   f"SNR 6 MSE maxnodes=100 {deep.mean_test_loss:.3f} vs "
                   f"maxnodes=4 {shallow.mean_test_loss:.3f}, gap {gap:.3f} "
                   f"> 2*SE {2 * se:.3f}")
    assert ok


def test_optimal_nodesize_falls_with_snr(criterion):
    medians = {}
    for snr in (0.05, 6.0):
        spec = bench.SweepSpec(
            problem=SyntheticSpec.from_setting("low", snr, test_size=1000),
            family=bench.ForestFamily(TreeConfig(mtry=3), 100),
            grid={"nodesize": bench.nodesize_grid(100)}, reps=30,
            master_seed=SEED)
        res = bench.tune_nodesize(spec)
        assert len(res.optimal) == 30
        medians[snr] = float(np.median(res.optimal))
    ok = criterion(3, medians[0.05] > medians[6.0],
                   f"median optimal nodesize {medians[0.05]:g} at SNR 0.05 > "
                   f"{medians[6.0]:g} at SNR 6")
    assert ok


def test_double_descent_without_interpolation(criterion):
    train, _, test = label_noise_problem(500, 20, 0.2, test_size=2000, seed=SEED)
    train, test = train.as_task("regression"), test.as_task("regression")
    forest = fit_forest(train, TreeConfig(mtry=6), 100, SEED)
    train_mse = evaluate(forest.predict(train.features), train.response)
    test_mse = evaluate(forest.predict(test.features), test.response)
    singles = [evaluate(p, test.response)
               for p in forest.tree_predictions(test.features)]
    median_single = float(np.median(singles))
    forest_interp = is_interpolating(forest, train)
    tree = grow_tree(train, TreeConfig(mtry=6, resample="none"),
                     np.random.default_rng(SEED))
    tree_interp = is_interpolating(tree, train)
    assert len(np.unique(train.features, axis=0)) == train.n
    ok = criterion(4, train_mse > 0 and test_mse <= 0.85 * median_single
                   and not forest_interp and tree_interp,
                   f"forest train MSE {train_mse:.4f} > 0, test MSE "
                   f"{test_mse:.4f} vs median tree {median_single:.4f} "
                   f"({1 - test_mse / median_single:.0%} lower), forest "
                   f"interpolates={forest_interp}, no-resample tree "
                   f"interpolates={tree_interp}")
    assert ok


def test_randfs_shrinkage_identity(criterion):
    rng = np.random.default_rng(SEED)
    X = orthonormal_design(64, 8, rng)
    d = Dataset(X, X @ rng.normal(size=8) + rng.normal(size=64))
    _, b_ols = ols_fit(X, d.response)
    worst = 0.0
    for depth in (1, 4, 8):
        for mtry in (1, 3, 8):
            for members in (1, 40):
                m = fit_randfs(d, RandFSConfig(depth, mtry, members, seed=SEED))
                worst = max(worst,
                            float(np.max(np.abs(m.coefficients - m.gamma * b_ols))))
    ok = criterion(5, worst <= 1e-8,
                   f"max |beta_j - gamma_j*beta_ols_j| over 18 configs = "
                   f"{worst:.2e} <= 1e-8")
    assert ok


def _cells(tree, X):
    """Training rows reaching each node."""
    rows = {0: np.arange(X.shape[0])}
    for node in range(tree.n_nodes):
        f = tree.feature[node]
        if f < 0:
            continue
        idx = rows[node]
        go_left = X[idx, f] <= tree.threshold[node]
        rows[tree.left[node]] = idx[go_left]
        rows[tree.right[node]] = idx[~go_left]
    return rows


def test_cart_matches_brute_force(criterion):
    rng = np.random.default_rng(SEED)
    checked, mismatches = 0, 0
    for i in range(200):
        n, p = int(rng.integers(2, 31)), int(rng.integers(1, 5))
        # a coarse value grid makes tied thresholds and gains common
        X = rng.integers(0, 5, (n, p)).astype(float)
        if i % 2:
            X += rng.normal(size=(n, p))
        classification = i % 3 == 0
        if classification:
            d = Dataset(X, rng.integers(0, 3, n), "classification", 3)
        else:
            d = Dataset(X, np.round(rng.normal(size=n), 1))
        tree = grow_tree(d, TreeConfig(d.task, resample="none"),
                         np.random.default_rng(i))
        cells = _cells(tree, X)
        for node, idx in cells.items():
            if idx.size < 2:
                continue
            got = best_split(X[idx], d.response[idx], task=d.task, n_classes=3
                             if classification else None)
            want = brute_force_split(X[idx], d.response[idx], classification)
            checked += 1
            if want is None:
                good = got is None and tree.feature[node] < 0
            else:
                good = (got is not None and got.feature == want[0]
                        and got.threshold == float(want[1])
                        and math.isclose(got.gain, float(want[2]),
                                         rel_tol=1e-12, abs_tol=1e-12)
                        and tree.feature[node] == want[0]
                        and tree.threshold[node] == float(want[1]))
            mismatches += not good
    ok = criterion(6, mismatches == 0,
                   f"{checked} cells across 200 datasets, {mismatches} "
                   f"disagreements with the exhaustive oracle")
    assert ok


def test_complete_u_statistic(criterion):
    rng = np.random.default_rng(SEED)
    X = rng.normal(size=(8, 2))
    d = Dataset(X, rng.normal(size=8))
    x = np.array([0.1, -0.2])
    stump = TreeConfig(maxnodes=2, resample="subsample", subsample_size=3)
    draws = all_subsamples(8, 3)
    forest = fit_forest(d, stump, len(draws), SEED, draws=draws)
    via_forest = float(forest.predict(x)[0])
    u = complete_u_statistic(d, 3, stump, x)
    stump_err = abs(via_forest - u)

    # the mean kernel: a root-only tree predicts its subsample mean;
    # multiples of 3 keep every subsample mean exactly representable
    y_int = Dataset(X, 3.0 * rng.integers(-20, 20, 8))
    mean_cfg = TreeConfig(maxnodes=1, resample="subsample", subsample_size=3)
    mean_forest = fit_forest(y_int, mean_cfg, len(draws), SEED, draws=draws)
    exact = mean_forest.predict(x)[0] == y_int.response.mean()
    y_real = Dataset(X, rng.normal(size=8))
    real_forest = fit_forest(y_real, mean_cfg, len(draws), SEED, draws=draws)
    real_err = abs(real_forest.predict(x)[0] - y_real.response.mean())
    ok = criterion(7, len(draws) == 56 and stump_err <= 1e-12 and exact
                   and real_err <= 1e-12,
                   f"56 subsamples, |forest - U_n| = {stump_err:.1e}; mean "
                   f"kernel exact={exact}, real-valued error {real_err:.1e}")
    assert ok


SWEEPS = {
    "sweep-depth": ["sweep-depth", "--setting", "low", "--snr", "0.05,6",
                    "--reps", "4", "--trees", "10", "--maxnodes-grid", "2,10,100"],
    "tune-nodesize": ["tune-nodesize", "--setting", "low", "--snr", "1",
                      "--reps", "3", "--trees", "10"],
    "double-descent": ["double-descent", "--label-noise", "100,10", "--task",
                       "regression", "--phase1", "2,10,100", "--phase2",
                       "1,5,20", "--reps", "3", "--policy", "tuned"],
    "randfs": ["randfs", "--setting", "low", "--snr", "2", "--reps", "3",
               "--members", "10"],
}


def test_sweeps_byte_identical_across_threads(criterion, tmp_path, capsys):
    identical = []
    for name, argv in SWEEPS.items():
        outputs = []
        for run, threads in enumerate(("1", "8")):
            out = tmp_path / f"{name}-{run}.csv"
            assert main(argv + ["--seed", "99", "--threads", threads,
                                "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
        identical.append(outputs[0] == outputs[1] and len(outputs[0]) > 0)
    capsys.readouterr()
    ok = criterion(8, all(identical),
                   f"{sum(identical)}/{len(SWEEPS)} sweeps byte-identical at "
                   f"threads 1 and 8")
    assert ok


def test_snr_machinery(criterion):
    q = quadratic_form(beta_type2(5, 5), make_sigma(5, 0.35))
    q_err = abs(q - ar1_double_sum(5, 0.35))
    g = snr_grid()
    logs = np.diff(np.log(g))
    spread = float(np.max(np.abs(logs - logs[0])))
    ok = criterion(9, q_err <= 1e-12 and g[0] == 0.05 and g[-1] == 6.0
                   and len(g) == 10 and spread <= 1e-12,
                   f"quadratic form {q!r} (oracle error {q_err:.1e}), grid "
                   f"{float(g[0])!r}..{float(g[-1])!r}, log-step spread {spread:.1e}")
    assert ok
