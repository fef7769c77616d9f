import numpy as np
import pytest

from oracles import enumerate_subsample_average
from rfdepth.cart import TreeConfig, grow_tree
from rfdepth.ensemble import (aggregate, all_subsamples, complete_u_statistic,
                              default_threads, evaluate, fit_forest,
                              is_interpolating, predict_forest)
from rfdepth.errors import CapacityError, DomainError
from rfdepth.resampling import derive_seed, resample, task_rng
from rfdepth.tabular import Dataset


def _data(n=40, p=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    return Dataset(X, X[:, 0] + rng.normal(size=n))


class TestResample:
    def test_none(self):
        r = resample(5, "none", np.random.default_rng(0))
        assert r.indices.tolist() == [0, 1, 2, 3, 4]

    def test_bootstrap(self):
        r = resample(5, "bootstrap", np.random.default_rng(0))
        assert r.indices.size == 5 and set(r.indices) <= set(range(5))

    def test_subsample(self):
        r = resample(5, "subsample", np.random.default_rng(0), 3)
        assert len(set(r.indices)) == 3

    def test_subsample_too_large(self):
        with pytest.raises(DomainError):
            resample(5, "subsample", np.random.default_rng(0), 6)

    def test_bootstrap_uniform(self):
        rng = np.random.default_rng(1)
        counts = np.zeros(4)
        for _ in range(5000):
            counts += np.bincount(resample(4, "bootstrap", rng).indices, minlength=4)
        assert np.allclose(counts / counts.sum(), 0.25, atol=0.01)

    def test_streams(self):
        a = task_rng(7, 3).integers(0, 2 ** 32, 4)
        b = task_rng(7, 3).integers(0, 2 ** 32, 4)
        c = task_rng(7, 4).integers(0, 2 ** 32, 4)
        assert np.array_equal(a, b) and not np.array_equal(a, c)
        assert derive_seed(1, 2) == derive_seed(1, 2) != derive_seed(1, 3)


class TestForest:
    def test_single_tree_no_resample(self):
        d = _data()
        cfg = TreeConfig(resample="none", maxnodes=8)
        f = fit_forest(d, cfg, 1, 3)
        t = grow_tree(d, cfg, np.random.default_rng(0))
        assert np.array_equal(f.predict(d.features), t.predict(d.features))

    def test_determinism_across_threads(self):
        d = _data()
        cfg = TreeConfig(mtry=2, maxnodes=10)
        a = fit_forest(d, cfg, 30, 11, threads=1).predict(d.features)
        b = fit_forest(d, cfg, 30, 11, threads=8).predict(d.features)
        assert np.array_equal(a, b)
        c = fit_forest(d, cfg, 30, 12, threads=1).predict(d.features)
        assert not np.array_equal(a, c)

    def test_prefix_of_larger_forest(self):
        d = _data()
        cfg = TreeConfig(mtry=2)
        big = fit_forest(d, cfg, 20, 5)
        small = fit_forest(d, cfg, 7, 5)
        assert np.array_equal(big.head(7).predict(d.features),
                              small.predict(d.features))

    def test_bagging_is_mtry_p(self):
        d = _data()
        a = fit_forest(d, TreeConfig(), 10, 2).predict(d.features)
        b = fit_forest(d, TreeConfig(mtry=d.p, resample="bootstrap"), 10, 2)
        assert np.array_equal(a, b.predict(d.features))

    def test_prediction_within_tree_range(self):
        d = _data(seed=3)
        f = fit_forest(d, TreeConfig(mtry=2, maxnodes=6), 25, 1)
        X = np.random.default_rng(9).normal(size=(50, d.p))
        tp = f.tree_predictions(X)
        pred = f.predict(X)
        assert np.all(pred >= tp.min(axis=0) - 1e-12)
        assert np.all(pred <= tp.max(axis=0) + 1e-12)

    def test_predict_forest_single_vector(self):
        d = _data()
        f = fit_forest(d, TreeConfig(maxnodes=4), 3, 0)
        assert predict_forest(f, d.features[0]) == f.predict(d.features[:1])[0]
        with pytest.raises(DomainError):
            predict_forest(f, np.zeros(d.p + 1))

    def test_classification_votes(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(60, 3))
        d = Dataset(X, (X[:, 0] > 0).astype(float), "classification")
        f = fit_forest(d, TreeConfig("classification", mtry=2), 15, 0)
        pred = f.predict(X)
        assert pred.dtype == np.int64
        assert np.array_equal(pred, aggregate(f.tree_predictions(X),
                                              "classification", 2))

    def test_variance_non_increasing_in_trees(self):
        d = _data(n=30, p=3, seed=4)
        x = np.zeros((1, 3))
        cfg = TreeConfig(mtry=1, maxnodes=8)
        preds = np.array([fit_forest(d, cfg, 100, s).tree_predictions(x)[:, 0]
                          for s in range(200)])
        var = [np.var([row[:b].mean() for row in preds], ddof=1)
               for b in (1, 10, 100)]
        assert var[0] >= var[1] * 0.9 and var[1] >= var[2] * 0.9
        assert var[0] > var[2]


class TestAggregate:
    def test_mean(self):
        assert aggregate(np.array([[0.2], [0.4]]), "regression")[0] == \
            pytest.approx(0.3)

    def test_majority(self):
        assert aggregate(np.array([[1], [1], [0]]), "classification", 2)[0] == 1

    def test_tie_goes_low(self):
        assert aggregate(np.array([[2], [1]]), "classification", 3)[0] == 1

    def test_identical_trees(self):
        row = np.array([0.5, -1.25, 3.0])
        assert np.array_equal(aggregate(np.stack([row] * 4), "regression"), row)


class TestEvaluate:
    def test_perfect(self):
        assert evaluate([1, 2], [1, 2]) == 0
        assert evaluate([1, 0], [1, 0], "classification") == 0

    def test_constant_class(self):
        assert evaluate([0] * 4, [0, 1, 0, 1], "classification") == 0.5

    def test_mse(self):
        assert evaluate([0, 0], [0, 2]) == 2.0

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            evaluate([0, 0], [0, 2, 3])


class TestInterpolation:
    def test_full_depth_tree(self):
        d = _data()
        t = grow_tree(d, TreeConfig(resample="none"), np.random.default_rng(0))
        assert is_interpolating(t, d)

    def test_stump_root(self):
        d = _data()
        t = grow_tree(d, TreeConfig(resample="none", maxnodes=1),
                      np.random.default_rng(0))
        assert not is_interpolating(t, d)

    def test_bootstrap_forest(self):
        d = _data()
        f = fit_forest(d, TreeConfig(mtry=2), 50, 0)
        assert not is_interpolating(f, d)

    def test_implies_zero_loss(self):
        rng = np.random.default_rng(2)
        for task in ("regression", "classification"):
            X = rng.normal(size=(30, 2))
            y = (X[:, 0] > 0).astype(float) if task == "classification" \
                else X[:, 0]
            d = Dataset(X, y, task)
            for resample_mode in ("none", "bootstrap"):
                f = fit_forest(d, TreeConfig(task, resample=resample_mode), 5, 1)
                if is_interpolating(f, d):
                    # regression interpolation is judged to an absolute 1e-12
                    bound = 0 if task == "classification" else 1e-24
                    assert evaluate(f.predict(X), y, task) <= bound

    def test_plain_callable(self):
        d = _data()
        assert is_interpolating(lambda X: d.response.copy(), d)


class TestUStatistic:
    def test_small_enumeration(self):
        d = _data(n=4, p=2)
        x = np.array([0.1, -0.3])
        cfg = TreeConfig(maxnodes=2, resample="subsample", subsample_size=2)

        def kernel(idx):
            t = grow_tree(d, cfg, np.random.default_rng(0), indices=idx)
            return float(t.predict(x)[0])

        want = enumerate_subsample_average(4, 2, kernel)
        assert complete_u_statistic(d, 2, cfg, x) == pytest.approx(want, abs=1e-12)

    def test_k_equals_n(self):
        d = _data(n=6, p=2)
        cfg = TreeConfig(maxnodes=3, resample="none")
        x = np.array([0.5, 0.5])
        full = grow_tree(d, cfg, np.random.default_rng(0)).predict(x)[0]
        assert complete_u_statistic(d, 6, cfg, x) == full

    def test_forest_over_all_subsamples(self):
        d = _data(n=7, p=2)
        cfg = TreeConfig(maxnodes=2, resample="subsample", subsample_size=3)
        x = np.array([0.0, 0.0])
        draws = all_subsamples(7, 3)
        f = fit_forest(d, cfg, len(draws), 0, draws=draws)
        assert f.predict(x)[0] == pytest.approx(
            complete_u_statistic(d, 3, cfg, x), abs=1e-12)

    def test_guards(self):
        d = _data(n=6, p=2)
        with pytest.raises(DomainError):
            complete_u_statistic(d, 2, TreeConfig(mtry=1), np.zeros(2))
        with pytest.raises(CapacityError):
            all_subsamples(40, 20)


def test_default_threads(monkeypatch):
    monkeypatch.delenv("RFDEPTH_THREADS", raising=False)
    assert default_threads() == 1
    monkeypatch.setenv("RFDEPTH_THREADS", "3")
    assert default_threads() == 3
