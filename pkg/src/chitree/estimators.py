"""scikit-learn compatible classifiers."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted, check_random_state

from ._validation import build_dataset, encode_columns
from .dataset import Priors, check_costs
from .ensemble import fit_bagged, fit_forest
from .tree import GrowConfig, build_tree, export_text


def _seed(random_state) -> int:
    if isinstance(random_state, (numbers.Integral, np.integer)):
        return int(random_state)
    return int(check_random_state(random_state).randint(2**31 - 1))


def _priors(priors, classes):
    if priors is None:
        return None
    if isinstance(priors, dict):
        try:
            vals = [priors[c] for c in classes]
        except KeyError as e:
            raise ValueError(f"priors lack class {e.args[0]!r}") from None
    else:
        vals = list(priors)
    if len(vals) != len(classes):
        raise ValueError(f"expected {len(classes)} priors, got {len(vals)}")
    return Priors(np.asarray(vals, dtype=float), estimated=False)


class _ChiTreeBase(ClassifierMixin, BaseEstimator):
    def _dataset(self, X, y):
        ds, classes = build_dataset(X, y, self.categorical_features)
        self.classes_ = classes
        self.n_features_in_ = ds.n_features
        self.feature_names_in_ = np.asarray(ds.names, dtype=object)
        pri = _priors(self.priors, list(classes)) if hasattr(self, "priors") else None
        costs = check_costs(getattr(self, "costs", None), ds.n_classes)
        return ds, pri, costs

    def _encode(self, X):
        check_is_fitted(self, "model_")
        m = self.model_
        return encode_columns(X, m.names, m.kinds, m.levels, self.categorical_features)

    def predict(self, X):
        """Predicted class label for each row of ``X``."""
        cols, n = self._encode(X)
        return self.classes_[self.model_.predict_codes(cols, n)]


class ChiTreeClassifier(_ChiTreeBase):
    """Single classification tree.

    Parameters
    ----------
    method : {"S", "K", "N"}
        Constant leaf models with linear splits (``S``), kernel node models
        (``K``) or nearest-neighbor node models (``N``).
    m0 : int
        Minimum per-side sample count used by two-level searches; nodes with
        fewer than ``2 * m0`` rows are not split.
    max_depth : int
        Safety bound on tree depth.
    folds : int
        Cross-validation folds for cost-complexity pruning.
    prune : bool
        Prune by cross-validation; ``False`` keeps the fully grown tree.
    se_rule : float
        0 selects the subtree with minimum CV cost, 1 the one-SE rule.
    priors : array-like or dict, optional
        Class priors (aligned with ``classes_`` or keyed by label). Estimated
        from class frequencies when omitted.
    costs : array-like, optional
        ``costs[i, j]`` is the cost of predicting class i for a class-j row.
    categorical_features : sequence of int or str, optional
        Columns to treat as categorical in addition to non-numeric ones.
    random_state : int or None
        Seed for the CV fold assignment.
    n_jobs : int, optional
        Threads used for the CV folds; results do not depend on it.
    prior_weighted : bool
        Weight kernel class densities by node class proportions.
    """

    def __init__(self, method="S", m0=5, max_depth=30, folds=10, prune=True, se_rule=0.0,
                 priors=None, costs=None, categorical_features=None, random_state=1, n_jobs=None,
                 prior_weighted=False):
        self.method = method
        self.m0 = m0
        self.max_depth = max_depth
        self.folds = folds
        self.prune = prune
        self.se_rule = se_rule
        self.priors = priors
        self.costs = costs
        self.categorical_features = categorical_features
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.prior_weighted = prior_weighted

    def fit(self, X, y):
        ds, pri, costs = self._dataset(X, y)
        cfg = GrowConfig(method=self.method, m0=self.m0, max_depth=self.max_depth, folds=self.folds,
                         seed=_seed(self.random_state), prune=self.prune, se_rule=self.se_rule,
                         prior_weighted=self.prior_weighted)
        self.model_ = build_tree(ds, cfg, pri, costs, n_jobs=self.n_jobs)
        return self

    @property
    def tree_(self):
        check_is_fitted(self, "model_")
        return self.model_

    @property
    def n_leaves_(self) -> int:
        return self.tree_.n_leaves

    def apply(self, X):
        """Leaf id reached by each row."""
        cols, n = self._encode(X)
        return self.model_.apply(cols, n)

    def export_text(self) -> str:
        return export_text(self.tree_)


class BaggedTreeClassifier(_ChiTreeBase):
    """Plurality vote of pruned trees grown on bootstrap samples."""

    def __init__(self, n_estimators=100, m0=5, max_depth=30, folds=10, priors=None, costs=None,
                 categorical_features=None, random_state=1, n_jobs=None):
        self.n_estimators = n_estimators
        self.m0 = m0
        self.max_depth = max_depth
        self.folds = folds
        self.priors = priors
        self.costs = costs
        self.categorical_features = categorical_features
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        ds, pri, costs = self._dataset(X, y)
        seed = _seed(self.random_state)
        cfg = GrowConfig(m0=self.m0, max_depth=self.max_depth, folds=self.folds, seed=seed)
        self.model_ = fit_bagged(ds, cfg, self.n_estimators, seed, pri, costs, self.n_jobs)
        return self

    @property
    def estimators_(self):
        check_is_fitted(self, "model_")
        return self.model_.members


class TreeForestClassifier(_ChiTreeBase):
    """Plurality vote of unpruned main-effect trees with a random variable subset per node."""

    def __init__(self, n_estimators=500, m0=5, max_depth=30, categorical_features=None,
                 random_state=1, n_jobs=None):
        self.n_estimators = n_estimators
        self.m0 = m0
        self.max_depth = max_depth
        self.categorical_features = categorical_features
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y):
        ds, pri, costs = self._dataset(X, y)
        seed = _seed(self.random_state)
        cfg = GrowConfig(m0=self.m0, max_depth=self.max_depth, seed=seed)
        self.model_ = fit_forest(ds, cfg, self.n_estimators, seed, pri, costs, self.n_jobs)
        return self

    @property
    def estimators_(self):
        check_is_fitted(self, "model_")
        return self.model_.members
