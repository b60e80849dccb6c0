"""Bagged trees and random-subspace forests with plurality voting."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .dataset import Dataset, DatasetError, Priors
from .tree import FORMAT_VERSION, GrowConfig, Tree, build_tree, schema_dict, tree_from_dict, tree_to_dict

MAX_BOOTSTRAP_RETRIES = 100


def mtry(n_features: int) -> int:
    """Per-node candidate subset size: ceil(sqrt(K)) clamped to [1, K]."""
    return min(max(1, math.ceil(math.sqrt(n_features))), max(1, n_features))


@dataclass(eq=False)
class Ensemble:
    kind: str  # "BG" or "GF"
    members: list
    seeds: list
    mtry: int | None = None

    @property
    def classes(self):
        return self.members[0].classes

    @property
    def n_classes(self):
        return len(self.classes)

    @property
    def names(self):
        return self.members[0].names

    @property
    def kinds(self):
        return self.members[0].kinds

    @property
    def levels(self):
        return self.members[0].levels

    @property
    def class_name(self):
        return self.members[0].class_name

    def votes(self, columns, n_rows: int) -> np.ndarray:
        """(n_rows, J) vote counts."""
        v = np.zeros((n_rows, self.n_classes), dtype=np.int64)
        rows = np.arange(n_rows)
        for m in self.members:
            np.add.at(v, (rows, m.predict_codes(columns, n_rows)), 1)
        return v

    def predict_codes(self, columns, n_rows: int) -> np.ndarray:
        # argmax returns the first maximum, i.e. the smallest class index on ties
        return np.argmax(self.votes(columns, n_rows), axis=1)

    def predict_dataset(self, dataset: Dataset) -> np.ndarray:
        return self.predict_codes(dataset.columns, dataset.n_rows)

    @property
    def n_leaves(self) -> float:
        return float(np.mean([m.n_leaves for m in self.members]))


def plurality(votes_per_member) -> np.ndarray:
    """Plurality over member predictions (members x rows); ties go to the smallest code."""
    v = np.asarray(votes_per_member)
    J = int(v.max()) + 1
    counts = np.zeros((v.shape[1], J), dtype=np.int64)
    for row in v:
        np.add.at(counts, (np.arange(v.shape[1]), row), 1)
    return np.argmax(counts, axis=1)


def bootstrap_rows(y, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    """Bootstrap row indices containing every class; resampled a bounded number of times."""
    n = y.size
    for _ in range(MAX_BOOTSTRAP_RETRIES):
        rows = rng.integers(0, n, size=n)
        if np.count_nonzero(np.bincount(y[rows], minlength=n_classes)) == n_classes:
            return rows
    raise DatasetError("could not draw a bootstrap sample containing every class")


def _member(dataset, config, priors, costs, seed, i):
    rng = np.random.default_rng([seed, i])
    rows = bootstrap_rows(dataset.y, dataset.n_classes, rng)
    sample = dataset.subset(rows)
    member_cfg = replace(config, seed=int(rng.integers(2**31)))
    return build_tree(sample, member_cfg, priors, costs, rng=rng)


def _fit(kind, dataset, config, n_estimators, seed, priors, costs, n_jobs, m):
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    if priors is not None and priors.estimated:
        priors = None
    members = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_member)(dataset, config, priors, costs, seed, i) for i in range(n_estimators))
    return Ensemble(kind, list(members), [[seed, i] for i in range(n_estimators)], m)


def fit_bagged(dataset: Dataset, config: GrowConfig | None = None, n_estimators: int = 100,
               seed: int = 1, priors: Priors | None = None, costs=None, n_jobs=None) -> Ensemble:
    """Pruned S-method trees on bootstrap samples."""
    base = config or GrowConfig()
    cfg = replace(base, method="S", prune=True, linear=True, interactions=True, max_features=None)
    return _fit("BG", dataset, cfg, n_estimators, seed, priors, costs, n_jobs, None)


def fit_forest(dataset: Dataset, config: GrowConfig | None = None, n_estimators: int = 500,
               seed: int = 1, priors: Priors | None = None, costs=None, n_jobs=None) -> Ensemble:
    """Unpruned main-effect-only S-method trees with a random variable subset at every node."""
    base = config or GrowConfig()
    m = mtry(dataset.n_features)
    cfg = replace(base, method="S", prune=False, linear=False, interactions=False, max_features=m)
    return _fit("GF", dataset, cfg, n_estimators, seed, priors, costs, n_jobs, m)


def ensemble_to_dict(e: Ensemble) -> dict:
    return {"format_version": FORMAT_VERSION, "type": "ensemble", "kind": e.kind, "mtry": e.mtry,
            "seeds": e.seeds, "schema": schema_dict(e.members[0]),
            "members": [tree_to_dict(m) for m in e.members]}


def ensemble_from_dict(d: dict) -> Ensemble:
    if d.get("format_version") != FORMAT_VERSION or d.get("type") != "ensemble":
        raise DatasetError("not an ensemble model file of a supported version")
    return Ensemble(d["kind"], [tree_from_dict(m) for m in d["members"]], d["seeds"], d.get("mtry"))


def model_from_dict(d: dict) -> Tree | Ensemble:
    """Load either model type from its dictionary form."""
    if d.get("type") == "ensemble":
        return ensemble_from_dict(d)
    return tree_from_dict(d)


def model_to_dict(model) -> dict:
    return ensemble_to_dict(model) if isinstance(model, Ensemble) else tree_to_dict(model)
