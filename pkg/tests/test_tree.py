from __future__ import annotations

import json
import re

import numpy as np
import pytest

from chitree.dataset import MISSING, UNSEEN
from chitree.harness import _dataset, gen_chessboard, gen_circle_lines
from chitree.splits import SplitDecision
from chitree.tree import (
    GrowConfig,
    build_tree,
    cost_complexity_sequence,
    describe_split,
    dumps,
    export_dot,
    export_text,
    grow,
    internal_ids_at,
    prune,
    stratified_folds,
    training_cost,
    tree_from_dict,
    tree_to_dict,
)


def xor_dataset(reps=20):
    a = np.tile([0, 0, 1, 1], reps)
    b = np.tile([0, 1, 0, 1], reps)
    return _dataset({}, {"A": (a, 2), "B": (b, 2)}, a ^ b, ("1", "2"), ["A", "B"])


def mixed_dataset(seed, n=150):
    rng = np.random.default_rng(seed)
    x1 = rng.normal(size=n)
    x2 = rng.uniform(size=n)
    c = rng.integers(0, 4, n)
    y = ((x1 + (c == 2) + rng.normal(0, 0.7, n)) > 0.3).astype(int)
    x1[rng.random(n) < 0.05] = np.nan
    c[rng.random(n) < 0.05] = MISSING
    return _dataset({"X1": x1, "X2": x2}, {"C": (c, 4)}, y, ("a", "b"), ["X1", "C", "X2"])


class TestGrow:
    def test_pure_dataset_single_leaf(self):
        y = np.zeros(30, dtype=int)
        y[0] = 1
        ds = _dataset({"X1": np.arange(30.0)}, {}, y, ("1", "2"), ["X1"]).subset(np.arange(1, 30))
        t = grow(ds, GrowConfig(prune=False))
        assert t.n_leaves == 1 and t.root.split is None
        assert t.predict_codes([np.array([np.nan, 1e6])], 2).tolist() == [0, 0]

    def test_xor_depth_two_exact(self):
        ds = xor_dataset()
        t = grow(ds, GrowConfig(prune=False))
        assert max(n.depth for n in t.leaves()) == 2
        assert t.n_leaves == 4
        assert training_cost(t, ds)[0] == 0
        assert t.root.split.path == "interaction"

    def test_small_node_not_split(self):
        ds = mixed_dataset(0, n=9)
        t = grow(ds, GrowConfig(m0=5, prune=False))
        assert t.n_leaves == 1

    def test_max_depth(self):
        ds = mixed_dataset(1)
        t = grow(ds, GrowConfig(max_depth=2, prune=False))
        assert max(n.depth for n in t.nodes()) <= 2

    def test_leaf_sizes_partition_training_rows(self):
        ds = mixed_dataset(2)
        t = grow(ds, GrowConfig(prune=False))
        assert sum(l.n for l in t.leaves()) == ds.n_rows
        leaf_ids = t.apply(ds.columns, ds.n_rows)
        for leaf in t.leaves():
            assert (leaf_ids == leaf.id).sum() == leaf.n

    def test_binary_children(self):
        t = grow(mixed_dataset(3), GrowConfig(prune=False))
        for n in t.nodes():
            assert (n.left is None) == (n.right is None) == (n.split is None)
            if n.split is not None:
                assert (n.left.id, n.right.id) == (2 * n.id, 2 * n.id + 1)

    @pytest.mark.parametrize("method", ["K", "N"])
    def test_model_methods_have_no_linear_splits(self, method):
        for seed in range(1, 4):
            t = grow(gen_circle_lines(300, seed), GrowConfig(method=method, prune=False))
            assert all(n.split.kind != "linear" for n in t.nodes() if n.split is not None)
            assert all(n.model is not None for n in t.nodes())

    def test_chessboard_top_splits_on_board_variables(self):
        ok = 0
        for seed in range(1, 11):
            t = grow(gen_chessboard(1000, seed), GrowConfig(prune=False))
            vars_ = {v for n in t.nodes() if n.split is not None and n.depth <= 2 for v in n.split.variables}
            ok += vars_ <= {0, 1}
        assert ok >= 9


class TestRouting:
    def test_numeric_missing_left(self):
        s = SplitDecision("numeric", (0,), threshold=1.5)
        assert s.goes_left({0: np.array([np.nan, 1.0, 2.0])}).tolist() == [True, True, False]

    def test_categorical_membership(self):
        s = SplitDecision("categorical", (0,), levels=frozenset({0, MISSING}))
        assert s.goes_left({0: np.array([MISSING, 0, 1, UNSEEN])}).tolist() == [True, True, False, False]

    def test_missingness_split(self):
        s = SplitDecision("missing", (0,))
        assert s.goes_left({0: np.array([np.nan, 0.0])}).tolist() == [True, False]

    def test_totality_fuzz(self):
        ds = mixed_dataset(4)
        t = build_tree(ds, GrowConfig(folds=5))
        rng = np.random.default_rng(0)
        n = 2000
        x1 = np.where(rng.random(n) < 0.3, np.nan, rng.normal(0, 5, n))
        x2 = np.where(rng.random(n) < 0.3, np.nan, rng.normal(0, 5, n))
        c = rng.choice([MISSING, UNSEEN, 0, 1, 2, 3], n)
        pred = t.predict_codes([x1, c, x2], n)
        assert pred.shape == (n,) and set(pred) <= {0, 1}


class TestPruning:
    @pytest.mark.parametrize("seed", range(20))
    def test_sequence_structure(self, seed):
        t = grow(mixed_dataset(100 + seed), GrowConfig(prune=False))
        seq = cost_complexity_sequence(t)
        assert seq[0] == 0.0
        assert all(a < b for a, b in zip(seq, seq[1:]))
        sets = [internal_ids_at(t, a) for a in seq]
        assert sets[-1] == set()
        for big, small in zip(sets, sets[1:]):
            assert small < big
        for s in sets:
            # a subtree: every kept internal node's parent is kept too
            assert all(i == 1 or i // 2 in s for i in s)

    def test_chosen_subtree_minimizes_cv_cost(self):
        for seed in range(5):
            t = build_tree(mixed_dataset(200 + seed), GrowConfig(folds=5, seed=seed))
            cv = t.pruning["cv_costs"]
            assert cv[t.pruning["chosen"]] == min(cv)

    def test_pruned_tree_is_sequence_member(self):
        ds = mixed_dataset(7)
        full = grow(ds, GrowConfig(prune=False, folds=5))
        seq = cost_complexity_sequence(full)
        pruned = prune(grow(ds, GrowConfig(prune=False, folds=5)), ds)
        assert {n.id for n in pruned.nodes() if n.split is not None} == internal_ids_at(full, pruned.pruning["alpha"])
        assert pruned.pruning["alphas"] == seq

    def test_zero_gain_splits_prune_to_root(self):
        # every level holds five rows of each class, so no split changes impurity
        c = np.repeat(np.arange(4), 10)
        y = np.tile(np.repeat([0, 1], 5), 4)
        ds = _dataset({}, {"C": (c, 4)}, y, ("1", "2"), ["C"])
        full = grow(ds, GrowConfig(prune=False))
        assert full.n_leaves > 1
        assert cost_complexity_sequence(full) == [0.0]
        assert build_tree(ds, GrowConfig(folds=5)).n_leaves == 1

    def test_one_se_rule_not_larger(self):
        ds = mixed_dataset(8)
        a = build_tree(ds, GrowConfig(folds=5, se_rule=0.0))
        b = build_tree(ds, GrowConfig(folds=5, se_rule=1.0))
        assert b.n_leaves <= a.n_leaves

    def test_stratified_folds(self):
        y = np.repeat([0, 1, 2], [30, 17, 5])
        f = stratified_folds(y, 5, 1)
        for j in range(3):
            counts = np.bincount(f[y == j], minlength=5)
            assert counts.max() - counts.min() <= 1
        np.testing.assert_array_equal(f, stratified_folds(y, 5, 1))


class TestSerialization:
    def test_roundtrip_predictions(self):
        ds = mixed_dataset(9)
        t = build_tree(ds, GrowConfig(folds=5))
        t2 = tree_from_dict(json.loads(dumps(tree_to_dict(t))))
        np.testing.assert_array_equal(t.predict_dataset(ds), t2.predict_dataset(ds))
        assert dumps(tree_to_dict(t2)) == dumps(tree_to_dict(t))

    @pytest.mark.parametrize("method", ["K", "N"])
    def test_roundtrip_model_methods(self, method):
        ds = gen_circle_lines(150, 2)
        t = build_tree(ds, GrowConfig(method=method, folds=3))
        t2 = tree_from_dict(json.loads(dumps(tree_to_dict(t))))
        np.testing.assert_array_equal(t.predict_dataset(ds), t2.predict_dataset(ds))

    def test_byte_determinism(self):
        ds = mixed_dataset(10)
        a = dumps(tree_to_dict(build_tree(ds, GrowConfig(folds=5, seed=3), n_jobs=1)))
        b = dumps(tree_to_dict(build_tree(ds, GrowConfig(folds=5, seed=3), n_jobs=3)))
        assert a == b

    def test_header_fields(self):
        d = tree_to_dict(build_tree(mixed_dataset(11), GrowConfig(folds=5)))
        assert d["format_version"] == 1 and d["type"] == "tree"


class TestExport:
    def test_single_leaf_one_line(self):
        y = np.zeros(12, dtype=int)
        y[0] = 1
        ds = _dataset({"X1": np.arange(12.0)}, {}, y, ("1", "2"), ["X1"]).subset(np.arange(1, 12))
        text = export_text(grow(ds, GrowConfig(prune=False)))
        assert text == "Node 1: n = 11, class 1\n"

    def test_depth_one_dot(self):
        x = np.arange(20.0)
        y = (x >= 10).astype(int)
        t = grow(_dataset({"X1": x}, {}, y, ("1", "2"), ["X1"]), GrowConfig(prune=False))
        dot = export_dot(t)
        assert dot.startswith("digraph tree {") and dot.rstrip().endswith("}")
        assert len(re.findall(r"^\s+n\d+ \[label=", dot, re.M)) == 3
        assert len(re.findall(r"->", dot)) == 2
        assert "X1 <= 9.5 or NA" in export_text(t)

    def test_linear_split_formatting(self):
        s = SplitDecision("linear", (0, 1), threshold=0.123456, coef=(0.70710678, -0.70710678))
        assert describe_split(s, ("U", "V"), (None, None)) == "0.7071 * U + -0.7071 * V <= 0.1235 or NA"

    def test_categorical_formatting(self):
        s = SplitDecision("categorical", (0,), levels=frozenset({MISSING, 1}))
        assert describe_split(s, ("C",), (("a", "b", "c"),)) == "C in {NA, b}"

    def test_leaf_sizes_shown(self):
        ds = mixed_dataset(12)
        t = build_tree(ds, GrowConfig(folds=5))
        sizes = [int(m) for m in re.findall(r"n = (\d+)", export_text(t))]
        assert sum(sizes) == ds.n_rows
