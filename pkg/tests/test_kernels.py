"""Backend equivalence for the tree kernels.

Both backends must produce bit-identical outputs so that a model trained
on one machine explains identically on another regardless of which
backend got built.
"""

import numpy as np
import pytest

from drillexplain import _kernels
from drillexplain._kernels import kernels_py
from drillexplain.gbm import GradientBoostedTrees, TrainConfig, _flatten

cython_built = "cython" in _kernels.available_backends()
needs_cython = pytest.mark.skipif(not cython_built,
                                  reason="compiled backend not built")


@pytest.fixture
def small_model():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(120, 6))
    y = (X[:, 0] + 0.5 * X[:, 3] > 0).astype(float)
    model = GradientBoostedTrees(TrainConfig(
        n_estimators=8, max_depth=3, subsample=1.0, colsample_bytree=1.0,
        learning_rate=0.3, seed=0))
    return model.fit(X, y), X


def call_predict(backend, model, X):
    fl = _flatten(model.trees_, model.config.learning_rate)
    return backend.predict_margin(fl.feature, fl.threshold, fl.left,
                                  fl.right, fl.value, fl.roots, fl.coeffs, X)


class TestDispatch:
    def test_python_backend_always_available(self):
        assert "python" in _kernels.available_backends()

    def test_active_backend_name_is_known(self):
        assert _kernels.BACKEND in _kernels.available_backends()

    def test_set_backend_round_trip(self):
        original = _kernels.BACKEND
        previous = _kernels.set_backend("python")
        try:
            assert previous == original
            assert _kernels.BACKEND == "python"
            assert _kernels.predict_margin is kernels_py.predict_margin
        finally:
            _kernels.set_backend(original)
        assert _kernels.BACKEND == original

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError, match="unknown backend"):
            _kernels.set_backend("fortran")


@needs_cython
class TestEquivalence:
    def test_predict_margin_bit_identical(self, small_model):
        model, X = small_model
        from drillexplain._kernels import kernels_cy
        a = call_predict(kernels_py, model, X)
        b = call_predict(kernels_cy, model, X)
        assert np.array_equal(a, b)

    def test_best_split_identical(self):
        from drillexplain._kernels import kernels_cy
        rng = np.random.default_rng(5)
        n, F = 200, 7
        binned = rng.integers(0, 12, size=(n, F)).astype(np.uint16)
        bin_counts = np.full(F, 12, dtype=np.int64)
        grad = rng.normal(size=n)
        hess = rng.uniform(0.05, 0.3, size=n)
        rows = np.arange(n, dtype=np.int64)
        feats = np.arange(F, dtype=np.int64)
        out_py = kernels_py.best_split(binned, bin_counts, grad, hess,
                                       rows, feats, 1.0, 1.0)
        out_cy = kernels_cy.best_split(binned, bin_counts, grad, hess,
                                       rows, feats, 1.0, 1.0)
        assert out_py[0] == out_cy[0]
        assert out_py[1] == out_cy[1]
        assert out_py[2] == out_cy[2]

    def test_tree_shap_bit_identical(self, small_model):
        from drillexplain._kernels import kernels_cy
        from drillexplain.shapley import TreeShapExplainer
        model, X = small_model
        explainer = TreeShapExplainer(model)
        x = X[11]
        phis = {}
        for backend in ("python", "cython"):
            prev = _kernels.set_backend(backend)
            try:
                phis[backend], _ = explainer.shap_values(x)
            finally:
                _kernels.set_backend(prev)
        assert np.array_equal(phis["python"], phis["cython"])

    def test_trained_model_identical_across_backends(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(80, 5))
        y = (X[:, 2] > 0.2).astype(float)
        docs = {}
        for backend in ("python", "cython"):
            prev = _kernels.set_backend(backend)
            try:
                model = GradientBoostedTrees(TrainConfig(
                    n_estimators=5, max_depth=4, seed=1)).fit(X, y)
                docs[backend] = model.to_dict()
            finally:
                _kernels.set_backend(prev)
        assert docs["python"] == docs["cython"]
