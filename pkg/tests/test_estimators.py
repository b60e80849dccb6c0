from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score

from chitree import BaggedTreeClassifier, ChiTreeClassifier, TreeForestClassifier


def xy(seed=0, n=200):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = np.where(X[:, 0] - X[:, 1] > 0, "yes", "no")
    return X, y


class TestChiTreeClassifier:
    def test_params_roundtrip(self):
        est = ChiTreeClassifier(method="K", m0=7, folds=4)
        p = est.get_params()
        assert p["method"] == "K" and p["m0"] == 7 and p["folds"] == 4
        c = clone(est)
        assert c.get_params() == p
        est.set_params(m0=3)
        assert est.m0 == 3

    def test_fit_predict_labels(self):
        X, y = xy()
        est = ChiTreeClassifier(folds=5).fit(X, y)
        assert list(est.classes_) == ["no", "yes"]
        assert est.n_features_in_ == 3
        pred = est.predict(X)
        assert set(pred) <= {"no", "yes"}
        assert est.score(X, y) >= 0.9
        assert est.n_leaves_ == est.tree_.n_leaves
        assert est.apply(X).shape == (200,)
        assert est.export_text().startswith("Node 1:")

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            ChiTreeClassifier().predict(np.zeros((2, 3)))

    def test_sklearn_cross_val(self):
        X, y = xy(1, 120)
        scores = cross_val_score(ChiTreeClassifier(folds=3), X, y, cv=3)
        assert scores.mean() >= 0.75

    def test_nan_input(self):
        X, y = xy(2)
        X[::7, 0] = np.nan
        est = ChiTreeClassifier(folds=5).fit(X, y)
        assert len(est.predict(X)) == 200

    def test_priors_and_costs(self):
        X, y = xy(3)
        est = ChiTreeClassifier(folds=5, priors={"no": 0.2, "yes": 0.8},
                                costs=[[0, 1], [1, 0]]).fit(X, y)
        assert est.predict(X).shape == (200,)
        with pytest.raises(ValueError):
            ChiTreeClassifier(priors=[0.5]).fit(X, y)

    def test_dataframe_with_categoricals(self):
        pd = pytest.importorskip("pandas")
        rng = np.random.default_rng(4)
        colour = rng.choice(["red", "green", "blue"], 200)
        size = rng.normal(size=200)
        y = np.where((colour == "red") ^ (size > 0), 1, 0)
        df = pd.DataFrame({"colour": colour, "size": size})
        est = ChiTreeClassifier(folds=5).fit(df, y)
        assert list(est.feature_names_in_) == ["colour", "size"]
        assert est.tree_.kinds == ("c", "n")
        assert est.score(df, y) >= 0.95
        new = pd.DataFrame({"colour": ["purple", None], "size": [0.5, -0.5]})
        assert len(est.predict(new)) == 2

    def test_explicit_categorical_index(self):
        rng = np.random.default_rng(5)
        codes = rng.integers(0, 4, 150)
        X = np.column_stack([codes, rng.normal(size=150)])
        y = np.isin(codes, [1, 3]).astype(int)
        est = ChiTreeClassifier(categorical_features=[0], folds=5).fit(X, y)
        assert est.tree_.kinds == ("c", "n")
        assert est.score(X, y) == 1.0


class TestEnsembles:
    def test_bagged(self):
        X, y = xy(6, 120)
        est = BaggedTreeClassifier(n_estimators=4, folds=4).fit(X, y)
        assert len(est.estimators_) == 4
        assert est.score(X, y) >= 0.9

    def test_forest(self):
        X, y = xy(7, 150)
        est = TreeForestClassifier(n_estimators=30).fit(X, y)
        assert len(est.estimators_) == 30
        assert est.score(X, y) >= 0.95
        assert clone(est).get_params()["n_estimators"] == 30

    def test_forest_deterministic(self):
        X, y = xy(8, 100)
        a = TreeForestClassifier(n_estimators=5, random_state=3).fit(X, y).predict(X)
        b = TreeForestClassifier(n_estimators=5, random_state=3, n_jobs=2).fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)
