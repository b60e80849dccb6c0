from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from chitree.dataset import class_weights
from chitree.harness import _dataset, gen_circle_lines
from chitree.node_models import (
    ConstantModel,
    KernelModel1D,
    KernelModel2D,
    NNModel,
    NodeModel,
    bandwidth,
    fit_kernel_model,
    fit_nn_model,
    k_neighbors,
    sample_bandwidth,
)
from chitree.splits import NodeView, Selection


def node_of(numeric=None, categorical=None, y=None, order=None):
    numeric, categorical = numeric or {}, categorical or {}
    order = order or list(numeric) + list(categorical)
    y = np.asarray(y)
    J = max(2, int(y.max()) + 1)
    ds = _dataset(numeric, categorical, y, tuple(str(j + 1) for j in range(J)), order)
    counts = np.bincount(y, minlength=J)
    return NodeView(ds, np.arange(y.size)), class_weights(counts, counts / counts.sum())


class TestFormulas:
    def test_bandwidth_sd_only(self):
        assert bandwidth(1, 0, 32) == 1.25

    def test_bandwidth_takes_smaller_scale(self):
        assert bandwidth(1, 2, 32) == 1.25
        assert bandwidth(1, 1, 32) == pytest.approx(2.5 * 0.7413 / 2)

    def test_bandwidth_degenerate(self):
        assert bandwidth(0, 0, 10) is None

    @pytest.mark.parametrize("n,k", [(3, 3), (20, 3), (100, 5), (1000, 7)])
    def test_k_neighbors(self, n, k):
        assert k_neighbors(n) == k

    def test_k_neighbors_bounds(self):
        for n in range(3, 2000):
            assert 3 <= k_neighbors(n) <= n

    def test_sample_bandwidth_uses_sd_and_iqr(self):
        x = np.arange(1.0, 11.0)
        q1, q3 = np.percentile(x, [25, 75])
        expected = 2.5 * min(x.std(ddof=1), 0.7413 * (q3 - q1)) * 10 ** -0.2
        assert sample_bandwidth(x) == pytest.approx(expected)


class TestKernelDensity:
    @pytest.mark.parametrize("seed", range(5))
    def test_1d_integrates_to_one(self, seed):
        rng = np.random.default_rng(seed)
        y = np.repeat([0, 1], 40)
        x = np.where(y == 0, rng.normal(0, 1, 80), rng.exponential(2, 80))
        node, w = node_of({"X1": x}, y=y)
        m = fit_kernel_model(node, Selection("main", (0,)), w)
        assert isinstance(m, KernelModel1D)
        for j in (0, 1):
            h, pts = m.bandwidths[j], m.points[j]
            lo, hi = pts.min() - 8 * h, pts.max() + 8 * h
            total, _ = integrate.quad(lambda t: m.density(t, j)[0], lo, hi, limit=500,
                                      points=np.sort(pts)[:: max(1, pts.size // 40)])
            assert abs(total - 1) < 1e-3

    @pytest.mark.parametrize("seed", range(3))
    def test_2d_integrates_to_one(self, seed):
        rng = np.random.default_rng(seed)
        y = np.repeat([0, 1], 30)
        a = rng.normal(size=60)
        b = 0.6 * a + rng.normal(size=60) + y
        node, w = node_of({"X1": a, "X2": b}, y=y)
        m = fit_kernel_model(node, Selection("interaction", (0, 1)), w)
        assert isinstance(m, KernelModel2D)
        for j in (0, 1):
            h1, h2 = m.bandwidths[j]
            p = m.points[j]
            g1 = np.linspace(p[:, 0].min() - 8 * h1, p[:, 0].max() + 8 * h1, 400)
            g2 = np.linspace(p[:, 1].min() - 8 * h2, p[:, 1].max() + 8 * h2, 400)
            G1, G2 = np.meshgrid(g1, g2, indexing="ij")
            dens = m.density(np.column_stack([G1.ravel(), G2.ravel()]), j).reshape(G1.shape)
            total = integrate.trapezoid(integrate.trapezoid(dens, g2, axis=1), g1)
            assert abs(total - 1) < 5e-3

    def test_two_gaussians_boundary(self):
        rng = np.random.default_rng(11)
        y = np.repeat([0, 1], 200)
        x = np.where(y == 0, rng.normal(-2, 1, 400), rng.normal(2, 1, 400))
        node, w = node_of({"X1": x}, y=y)
        m = fit_kernel_model(node, Selection("main", (0,)), w)
        grid = np.linspace(-1.5, 1.5, 3001)
        pred = m.predict({0: grid}, grid.size)
        flips = grid[1:][np.diff(pred) != 0]
        assert flips.size == 1 and abs(flips[0]) <= 0.15

    def test_pure_node_constant(self):
        node, w = node_of({"X1": np.arange(10.0)}, y=np.zeros(10, dtype=int))
        m = fit_kernel_model(node, Selection("main", (0,)), w)
        assert isinstance(m, ConstantModel)
        assert m.predict({0: np.array([1e9, np.nan])}, 2).tolist() == [0, 0]

    def test_training_point_of_isolated_class(self):
        x = np.array([0.0, 0.1, 0.2, 0.3, 10.0, 10.1, 10.2, 10.3])
        y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        node, w = node_of({"X1": x}, y=y)
        m = fit_kernel_model(node, Selection("main", (0,)), w)
        np.testing.assert_array_equal(m.predict({0: x}, 8), y)

    def test_missing_gets_fallback(self):
        y = np.array([0] * 6 + [1] * 4)
        node, w = node_of({"X1": np.arange(10.0)}, y=y)
        m = fit_kernel_model(node, Selection("main", (0,)), w)
        assert m.predict({0: np.array([np.nan, 9.0])}, 2).tolist() == [0, 1]

    def test_table_model_unseen_level_fallback(self):
        a = np.array([0, 0, 0, 1, 1, 1, 0, 1])
        b = np.array([0, 1, 0, 1, 0, 1, 1, 0])
        y = a ^ b
        y[0] = 1  # class 1 is the majority (5 of 8)
        node, w = node_of(categorical={"X1": (a, 3), "X2": (b, 2)}, y=y)
        m = fit_kernel_model(node, Selection("interaction", (0, 1)), w)
        assert m.kind == "table"
        out = m.predict({0: np.array([2, -2, 1]), 1: np.array([0, 0, 1])}, 3)
        assert out.tolist()[:2] == [m.fallback, m.fallback]
        assert m.fallback == 1

    def test_mixed_model_separates(self):
        rng = np.random.default_rng(2)
        c = rng.integers(0, 2, 200)
        x = rng.uniform(-1, 1, 200)
        y = ((x > 0) ^ (c == 1)).astype(int)
        node, w = node_of({"X1": x}, {"X2": (c, 2)}, y=y)
        m = fit_kernel_model(node, Selection("interaction", (0, 1)), w)
        assert m.kind == "kernel-mixed"
        acc = (m.predict({0: x, 1: c}, 200) == y).mean()
        assert acc >= 0.9

    def test_roundtrip(self):
        rng = np.random.default_rng(3)
        y = np.repeat([0, 1], 20)
        a, b = rng.normal(size=40) + y, rng.normal(size=40)
        node, w = node_of({"X1": a, "X2": b}, y=y)
        m = fit_kernel_model(node, Selection("interaction", (0, 1)), w)
        m2 = NodeModel.from_dict(m.to_dict())
        q = {0: rng.normal(size=50), 1: rng.normal(size=50)}
        np.testing.assert_array_equal(m.predict(q, 50), m2.predict(q, 50))

    def test_circle_lines_root_only(self):
        errors = []
        for seed in range(1, 6):
            ds = gen_circle_lines(300, seed)
            counts = np.bincount(ds.y)
            w = class_weights(counts, counts / counts.sum())
            m = fit_kernel_model(NodeView(ds, np.arange(300)), Selection("interaction", (0, 1)), w)
            errors.append(int((m.predict(ds.columns, 300) != ds.y).sum()))
        assert sum(e <= 10 for e in errors) >= 4, errors


def brute_knn(points, labels, q, k, n_classes):
    out = []
    for row in q:
        d = np.sqrt(((points - row) ** 2).sum(1))
        kth = np.sort(d)[k - 1]
        votes = np.bincount(labels[d <= kth], minlength=n_classes)
        out.append(int(np.argmax(votes)))
    return np.array(out)


class TestNearestNeighbor:
    def test_three_nearest_all_class_two(self):
        x = np.array([0.0, 0.1, 0.2, 5.0, 5.1, 5.2, 9.0])
        y = np.array([1, 1, 1, 0, 0, 0, 0])
        m = NNModel(0, (0,), x, y, 3, np.ones(2))
        assert m.predict({0: np.array([0.05])}, 1).tolist() == [1]

    def test_ties_include_all_and_smallest_class_wins(self):
        x = np.array([-1.0, 1.0, -2.0, 2.0])
        y = np.array([0, 1, 1, 0])
        # k=1 but both points at distance 1 are included: one vote each, class 0 wins
        m = NNModel(1, (0,), x, y, 1, np.ones(2))
        assert m.predict({0: np.array([0.0])}, 1).tolist() == [0]
        # k=3: the two points at distance 2 tie for third place; 2 votes each
        m3 = NNModel(1, (0,), x, y, 3, np.ones(2))
        assert m3.predict({0: np.array([0.0])}, 1).tolist() == [0]

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force_2d(self, seed):
        rng = np.random.default_rng(seed)
        pts = np.round(rng.normal(size=(50, 2)), 1)  # rounding creates distance ties
        y = rng.integers(0, 3, 50)
        q = np.round(rng.normal(size=(100, 2)), 1)
        m = NNModel(0, (0, 1), pts, y, k_neighbors(50), np.ones(3))
        pred = m.predict({0: q[:, 0], 1: q[:, 1]}, 100)
        np.testing.assert_array_equal(pred, brute_knn(pts, y, q, k_neighbors(50), 3))

    def test_mahalanobis_scale_invariance(self):
        rng = np.random.default_rng(4)
        y = rng.integers(0, 2, 80)
        a = rng.normal(size=80) + y
        b = 3 * rng.normal(size=80) - y
        q = rng.normal(size=(200, 2)) * [1, 3]
        preds = []
        for s in (1.0, 7.5):
            node, w = node_of({"X1": a * s, "X2": b * s}, y=y)
            m = fit_nn_model(node, Selection("interaction", (0, 1)), w)
            preds.append(m.predict({0: q[:, 0] * s, 1: q[:, 1] * s}, 200))
        np.testing.assert_array_equal(preds[0], preds[1])

    def test_missing_gets_fallback(self):
        y = np.array([0] * 7 + [1] * 3)
        node, w = node_of({"X1": np.arange(10.0)}, y=y)
        m = fit_nn_model(node, Selection("main", (0,)), w)
        assert m.predict({0: np.array([np.nan])}, 1).tolist() == [0]

    def test_mixed_pair(self):
        rng = np.random.default_rng(5)
        c = rng.integers(0, 3, 150)
        x = rng.uniform(-1, 1, 150)
        y = ((x > 0) ^ (c == 2)).astype(int)
        node, w = node_of({"X1": x}, {"X2": (c, 3)}, y=y)
        m = fit_nn_model(node, Selection("interaction", (0, 1)), w)
        assert m.kind == "nn-mixed"
        assert (m.predict({0: x, 1: c}, 150) == y).mean() >= 0.9
        assert m.predict({0: np.array([0.5]), 1: np.array([-2])}, 1).tolist() == [m.fallback]

    def test_k_from_node_size(self):
        y = np.repeat([0, 1], 50)
        node, w = node_of({"X1": np.arange(100.0)}, y=y)
        m = fit_nn_model(node, Selection("main", (0,)), w)
        assert m.k == math.ceil(math.log(100))
