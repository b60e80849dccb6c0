"""Classifiers attached to tree nodes: constant, kernel discriminant and k-NN.

A node model uses at most two of the node's selected variables. Rows with a
missing value in a numeric model variable, or an unseen categorical level,
get the model's fallback class (the node's cost-minimizing class).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .dataset import assign_class

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)
RHO_MAX = 0.99
_CHUNK = 2048


def bandwidth(s: float, r: float, n: int) -> float | None:
    """Gaussian kernel bandwidth; ``None`` flags a degenerate sample (s = r = 0)."""
    if not (s > 0 or r > 0):
        return None
    scale = min(s, 0.7413 * r) if r > 0 else s
    return 2.5 * scale * n ** (-0.2)


def sample_bandwidth(x, n: int | None = None) -> float | None:
    """Bandwidth from a sample's SD (ddof=1) and IQR, with ``n`` defaulting to the sample size."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return None
    q1, q3 = np.percentile(x, [25, 75])
    return bandwidth(float(x.std(ddof=1)), float(q3 - q1), x.size if n is None else n)


def k_neighbors(n: int) -> int:
    """max(3, ceil(ln n)), capped at n."""
    if n < 1:
        raise ValueError("n must be positive")
    return min(n, max(3, math.ceil(math.log(n))))


def _argmax_or_fallback(scores, fallback):
    """Row-wise argmax (first index on ties); rows with no finite-or-inf winner get ``fallback``."""
    out = np.argmax(scores, axis=1)
    dead = ~np.any(scores > -np.inf, axis=1)
    out[dead] = fallback
    return out


class NodeModel:
    kind = "constant"

    def __init__(self, fallback: int, variables=()):
        self.fallback = int(fallback)
        self.variables = tuple(int(v) for v in variables)

    def predict(self, columns, n_rows: int) -> np.ndarray:
        return np.full(n_rows, self.fallback, dtype=np.intp)

    def _params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "fallback": self.fallback,
                "variables": list(self.variables), **self._params()}

    @staticmethod
    def from_dict(d: dict) -> "NodeModel":
        cls = _REGISTRY[d["kind"]]
        return cls._from_params(d)

    @classmethod
    def _from_params(cls, d):
        return cls(d["fallback"], d["variables"])


class ConstantModel(NodeModel):
    kind = "constant"


class TableModel(NodeModel):
    """Per-cell class scores over one or two categorical variables."""

    kind = "table"

    def __init__(self, fallback, variables, cells: dict, n_classes: int):
        super().__init__(fallback, variables)
        self.cells = {tuple(k): np.asarray(v, dtype=float) for k, v in cells.items()}
        self.n_classes = n_classes

    def predict(self, columns, n_rows):
        keys = list(zip(*(columns[v] for v in self.variables)))
        out = np.full(n_rows, self.fallback, dtype=np.intp)
        for i, key in enumerate(keys):
            sc = self.cells.get(tuple(int(x) for x in key))
            if sc is not None and sc.max() > 0:
                out[i] = int(np.argmax(sc))
        return out

    def _params(self):
        return {"n_classes": self.n_classes,
                "cells": [[list(k), v.tolist()] for k, v in sorted(self.cells.items())]}

    @classmethod
    def _from_params(cls, d):
        return cls(d["fallback"], d["variables"], {tuple(k): v for k, v in d["cells"]}, d["n_classes"])


def _class_log_density_1d(q, pts, h):
    """log of (n h)^-1 sum phi((q - x_i)/h) for query vector q."""
    if h is None:
        hit = np.isin(q, pts)
        return np.where(hit, np.inf, -np.inf)
    out = np.empty(q.size)
    for s in range(0, q.size, _CHUNK):
        u = (q[s:s + _CHUNK, None] - pts[None, :]) / h
        out[s:s + _CHUNK] = logsumexp(-0.5 * u * u, axis=1)
    return out - math.log(pts.size * h) - LOG_SQRT_2PI


class KernelModel1D(NodeModel):
    kind = "kernel-1d"

    def __init__(self, fallback, variables, points, bandwidths, log_weights=None):
        super().__init__(fallback, variables)
        self.points = [None if p is None else np.asarray(p, dtype=float) for p in points]
        self.bandwidths = list(bandwidths)
        self.log_weights = None if log_weights is None else np.asarray(log_weights, dtype=float)

    def density(self, x, j):
        return np.exp(_class_log_density_1d(np.atleast_1d(np.asarray(x, dtype=float)),
                                            self.points[j], self.bandwidths[j]))

    def predict(self, columns, n_rows):
        x = columns[self.variables[0]]
        ok = ~np.isnan(x)
        q = x[ok]
        scores = np.full((q.size, len(self.points)), -np.inf)
        for j, (pts, h) in enumerate(zip(self.points, self.bandwidths)):
            if pts is not None and pts.size:
                scores[:, j] = _class_log_density_1d(q, pts, h)
        if self.log_weights is not None:
            scores = scores + self.log_weights
        out = np.full(n_rows, self.fallback, dtype=np.intp)
        out[ok] = _argmax_or_fallback(scores, self.fallback)
        return out

    def _params(self):
        return {"points": [None if p is None else p.tolist() for p in self.points],
                "bandwidths": self.bandwidths,
                "log_weights": None if self.log_weights is None else self.log_weights.tolist()}

    @classmethod
    def _from_params(cls, d):
        return cls(d["fallback"], d["variables"], d["points"], d["bandwidths"], d["log_weights"])


def _class_log_density_2d(q, pts, h1, h2, rho):
    if h1 is None or h2 is None:
        hit = np.array([np.any((pts[:, 0] == a) & (pts[:, 1] == b)) for a, b in q], dtype=bool)
        return np.where(hit, np.inf, -np.inf)
    c = 1.0 - rho * rho
    out = np.empty(q.shape[0])
    for s in range(0, q.shape[0], _CHUNK):
        u = (q[s:s + _CHUNK, 0][:, None] - pts[None, :, 0]) / h1
        v = (q[s:s + _CHUNK, 1][:, None] - pts[None, :, 1]) / h2
        out[s:s + _CHUNK] = logsumexp(-(u * u - 2 * rho * u * v + v * v) / (2 * c), axis=1)
    return out - math.log(pts.shape[0] * h1 * h2 * 2 * math.pi * math.sqrt(c))


class KernelModel2D(NodeModel):
    """Per-class bivariate Gaussian kernel with the class sample correlation."""

    kind = "kernel-2d"

    def __init__(self, fallback, variables, points, bandwidths, rhos, log_weights=None):
        super().__init__(fallback, variables)
        self.points = [None if p is None else np.asarray(p, dtype=float).reshape(-1, 2) for p in points]
        self.bandwidths = [tuple(b) if b is not None else None for b in bandwidths]
        self.rhos = list(rhos)
        self.log_weights = None if log_weights is None else np.asarray(log_weights, dtype=float)

    def density(self, q, j):
        h = self.bandwidths[j] or (None, None)
        return np.exp(_class_log_density_2d(np.atleast_2d(q), self.points[j], h[0], h[1], self.rhos[j]))

    def predict(self, columns, n_rows):
        a = columns[self.variables[0]]
        b = columns[self.variables[1]]
        ok = ~(np.isnan(a) | np.isnan(b))
        q = np.column_stack([a[ok], b[ok]])
        scores = np.full((q.shape[0], len(self.points)), -np.inf)
        for j, pts in enumerate(self.points):
            if pts is not None and pts.size:
                h = self.bandwidths[j] or (None, None)
                scores[:, j] = _class_log_density_2d(q, pts, h[0], h[1], self.rhos[j])
        if self.log_weights is not None:
            scores = scores + self.log_weights
        out = np.full(n_rows, self.fallback, dtype=np.intp)
        out[ok] = _argmax_or_fallback(scores, self.fallback)
        return out

    def _params(self):
        return {"points": [None if p is None else p.tolist() for p in self.points],
                "bandwidths": [None if b is None else list(b) for b in self.bandwidths],
                "rhos": self.rhos,
                "log_weights": None if self.log_weights is None else self.log_weights.tolist()}

    @classmethod
    def _from_params(cls, d):
        return cls(d["fallback"], d["variables"], d["points"], d["bandwidths"], d["rhos"],
                   d["log_weights"])


class KernelModelMixed(NodeModel):
    """Categorical x numeric: level frequency times a per-(level, class) 1-d kernel density."""

    kind = "kernel-mixed"

    def __init__(self, fallback, variables, cells: dict, bandwidths, log_weights=None):
        # variables = (categorical, numeric); cells[(level, class)] = (log p(level|class), points)
        super().__init__(fallback, variables)
        self.cells = {tuple(k): (float(v[0]), np.asarray(v[1], dtype=float)) for k, v in cells.items()}
        self.bandwidths = list(bandwidths)
        self.log_weights = None if log_weights is None else np.asarray(log_weights, dtype=float)

    def predict(self, columns, n_rows):
        c = columns[self.variables[0]]
        x = columns[self.variables[1]]
        J = len(self.bandwidths)
        out = np.full(n_rows, self.fallback, dtype=np.intp)
        ok = np.flatnonzero(~np.isnan(x))
        if ok.size == 0:
            return out
        scores = np.full((ok.size, J), -np.inf)
        cq = c[ok]
        xq = x[ok]
        for (lev, j), (lp, pts) in self.cells.items():
            m = cq == lev
            if m.any():
                scores[m, j] = lp + _class_log_density_1d(xq[m], pts, self.bandwidths[j])
        if self.log_weights is not None:
            scores = scores + self.log_weights
        out[ok] = _argmax_or_fallback(scores, self.fallback)
        return out

    def _params(self):
        return {"cells": [[list(k), v[0], v[1].tolist()] for k, v in sorted(self.cells.items())],
                "bandwidths": self.bandwidths,
                "log_weights": None if self.log_weights is None else self.log_weights.tolist()}

    @classmethod
    def _from_params(cls, d):
        return cls(d["fallback"], d["variables"], {tuple(k): (lp, p) for k, lp, p in d["cells"]},
                   d["bandwidths"], d["log_weights"])


def knn_vote(dist, labels, k, weights, n_classes):
    """Weighted vote over the k nearest points, keeping every point tied with the k-th distance."""
    kth = np.partition(dist, k - 1, axis=1)[:, k - 1:k]
    near = dist <= kth
    votes = np.stack([(near & (labels == j)).sum(1) for j in range(n_classes)], axis=1) * weights
    return np.argmax(votes, axis=1)


class NNModel(NodeModel):
    """k-NN on one numeric variable or on two (Mahalanobis metric via ``transform``)."""

    kind = "nn"

    def __init__(self, fallback, variables, points, labels, k, weights, transform=None):
        super().__init__(fallback, variables)
        self.points = np.asarray(points, dtype=float).reshape(len(labels), -1)
        self.labels = np.asarray(labels, dtype=np.intp)
        self.k = int(k)
        self.weights = np.asarray(weights, dtype=float)
        self.transform = None if transform is None else np.asarray(transform, dtype=float)

    def _query(self, q):
        p = self.points
        if self.transform is not None:
            q = q @ self.transform.T
            p = p @ self.transform.T
        out = np.empty(q.shape[0], dtype=np.intp)
        for s in range(0, q.shape[0], _CHUNK):
            diff = q[s:s + _CHUNK, None, :] - p[None, :, :]
            dist = np.sqrt((diff * diff).sum(-1))
            out[s:s + _CHUNK] = knn_vote(dist, self.labels, self.k, self.weights, self.weights.size)
        return out

    def predict(self, columns, n_rows):
        cols = [columns[v] for v in self.variables]
        q = np.column_stack(cols)
        ok = ~np.isnan(q).any(1)
        out = np.full(n_rows, self.fallback, dtype=np.intp)
        if ok.any() and self.labels.size:
            out[ok] = self._query(q[ok])
        return out

    def _params(self):
        return {"points": self.points.tolist(), "labels": self.labels.tolist(), "k": self.k,
                "weights": self.weights.tolist(),
                "transform": None if self.transform is None else self.transform.tolist()}

    @classmethod
    def _from_params(cls, d):
        return cls(d["fallback"], d["variables"], d["points"], d["labels"], d["k"], d["weights"],
                   d["transform"])


class NNModelMixed(NodeModel):
    """k-NN on the numeric variable among rows sharing the query's categorical level."""

    kind = "nn-mixed"

    def __init__(self, fallback, variables, groups: dict, weights):
        super().__init__(fallback, variables)
        self.groups = {int(k): (np.asarray(p, dtype=float), np.asarray(l, dtype=np.intp))
                       for k, (p, l) in groups.items()}
        self.weights = np.asarray(weights, dtype=float)

    def predict(self, columns, n_rows):
        c = columns[self.variables[0]]
        x = columns[self.variables[1]]
        out = np.full(n_rows, self.fallback, dtype=np.intp)
        for lev, (pts, labels) in self.groups.items():
            m = np.flatnonzero((c == lev) & ~np.isnan(x))
            if m.size and labels.size:
                dist = np.abs(x[m][:, None] - pts[None, :])
                k = k_neighbors(labels.size)
                out[m] = knn_vote(dist, labels, k, self.weights, self.weights.size)
        return out

    def _params(self):
        return {"groups": [[k, p.tolist(), l.tolist()] for k, (p, l) in sorted(self.groups.items())],
                "weights": self.weights.tolist()}

    @classmethod
    def _from_params(cls, d):
        return cls(d["fallback"], d["variables"], {k: (p, l) for k, p, l in d["groups"]}, d["weights"])


_REGISTRY = {c.kind: c for c in (ConstantModel, TableModel, KernelModel1D, KernelModel2D,
                                 KernelModelMixed, NNModel, NNModelMixed)}


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _fallback(node, weights, costs):
    counts = np.bincount(node.y, minlength=weights.size)
    return assign_class(counts * weights, costs)


def _node_log_weights(node, weights, prior_weighted):
    if not prior_weighted:
        return None
    p = np.bincount(node.y, minlength=weights.size) * weights
    with np.errstate(divide="ignore"):
        return np.log(p / p.sum())


def _table_cells(node, variables, J):
    keys = np.column_stack([node.col(v) for v in variables])
    cells = {}
    for key, yy in zip(map(tuple, keys), node.y):
        cells.setdefault(tuple(int(k) for k in key), np.zeros(J))[yy] += 1
    return cells


def _ordered_vars(node, variables):
    """(categorical, numeric) order for mixed pairs."""
    a, b = variables
    return (a, b) if node.categorical(a) else (b, a)


def fit_kernel_model(node, selection, weights, costs=None, prior_weighted=False) -> NodeModel:
    """Kernel discriminant model on the node's selected variable(s)."""
    weights = np.asarray(weights, dtype=float)
    J = weights.size
    fb = _fallback(node, weights, costs)
    y = node.y
    if selection is None or np.count_nonzero(np.bincount(y, minlength=J)) < 2:
        return ConstantModel(fb)
    lw = _node_log_weights(node, weights, prior_weighted)
    vars_ = selection.variables if selection.path == "interaction" else selection.variables[:1]
    cats = [node.categorical(v) for v in vars_]
    if all(cats):
        cells = _table_cells(node, vars_, J)
        nj = np.bincount(y, minlength=J).astype(float)
        with np.errstate(divide="ignore", invalid="ignore"):
            cells = {k: np.where(nj > 0, v / nj, 0.0) * (1.0 if lw is None else np.exp(lw))
                     for k, v in cells.items()}
        return TableModel(fb, vars_, cells, J)
    if len(vars_) == 1:
        x = node.col(vars_[0])
        ok = ~np.isnan(x)
        n = int(ok.sum())
        pts, hs = [], []
        for j in range(J):
            pj = x[ok & (y == j)]
            pts.append(pj if pj.size else None)
            hs.append(sample_bandwidth(pj, n) if pj.size else None)
        if all(h is None for h in hs):
            return ConstantModel(fb)
        return KernelModel1D(fb, vars_, pts, hs, lw)
    if any(cats):
        cv, nv = _ordered_vars(node, vars_)
        c, x = node.col(cv), node.col(nv)
        ok = ~np.isnan(x)
        cells, hbar = {}, []
        for j in range(J):
            mj = ok & (y == j)
            nj = int(mj.sum())
            hs = []
            for lev in np.unique(c[mj]):
                pts = x[mj & (c == lev)]
                cells[(int(lev), j)] = (math.log(pts.size / nj), pts)
                h = sample_bandwidth(pts)
                if h is not None:
                    hs.append(h)
            hbar.append(float(np.mean(hs)) if hs else None)
        if not cells:
            return ConstantModel(fb)
        return KernelModelMixed(fb, (cv, nv), cells, hbar, lw)
    a, b = node.col(vars_[0]), node.col(vars_[1])
    ok = ~(np.isnan(a) | np.isnan(b))
    pts, hs, rhos = [], [], []
    for j in range(J):
        m = ok & (y == j)
        p = np.column_stack([a[m], b[m]])
        pts.append(p if m.any() else None)
        if m.sum() < 2:
            hs.append(None)
            rhos.append(0.0)
            continue
        h1, h2 = sample_bandwidth(p[:, 0]), sample_bandwidth(p[:, 1])
        hs.append(None if h1 is None or h2 is None else (h1, h2))
        if p[:, 0].std() > 0 and p[:, 1].std() > 0:
            rho = float(np.corrcoef(p[:, 0], p[:, 1])[0, 1])
        else:
            rho = 0.0
        rhos.append(float(np.clip(rho, -RHO_MAX, RHO_MAX)))
    if all(h is None for h in hs):
        return ConstantModel(fb)
    return KernelModel2D(fb, vars_, pts, hs, rhos, lw)


def mahalanobis_transform(points) -> np.ndarray:
    """Matrix L with ||L d|| the Mahalanobis length of d under the points' covariance."""
    cov = np.cov(points, rowvar=False)
    tr = np.trace(cov)
    if tr <= 0:
        return np.eye(points.shape[1])
    vals = np.linalg.eigvalsh(cov)
    if vals.min() < 1e-10 * tr:
        cov = cov + 1e-8 * tr * np.eye(cov.shape[0])
    return np.linalg.cholesky(np.linalg.inv(cov)).T


def fit_nn_model(node, selection, weights, costs=None) -> NodeModel:
    """Nearest-neighbor model on the node's selected variable(s)."""
    weights = np.asarray(weights, dtype=float)
    J = weights.size
    fb = _fallback(node, weights, costs)
    y = node.y
    if selection is None or np.count_nonzero(np.bincount(y, minlength=J)) < 2:
        return ConstantModel(fb)
    vars_ = selection.variables if selection.path == "interaction" else selection.variables[:1]
    cats = [node.categorical(v) for v in vars_]
    if all(cats):
        cells = {k: v * weights for k, v in _table_cells(node, vars_, J).items()}
        return TableModel(fb, vars_, cells, J)
    if len(vars_) == 1:
        x = node.col(vars_[0])
        ok = ~np.isnan(x)
        if not ok.any():
            return ConstantModel(fb)
        return NNModel(fb, vars_, x[ok], y[ok], k_neighbors(int(ok.sum())), weights)
    if any(cats):
        cv, nv = _ordered_vars(node, vars_)
        c, x = node.col(cv), node.col(nv)
        ok = ~np.isnan(x)
        groups = {int(lev): (x[ok & (c == lev)], y[ok & (c == lev)]) for lev in np.unique(c[ok])}
        return NNModelMixed(fb, (cv, nv), groups, weights)
    a, b = node.col(vars_[0]), node.col(vars_[1])
    ok = ~(np.isnan(a) | np.isnan(b))
    if ok.sum() < 2:
        return ConstantModel(fb)
    pts = np.column_stack([a[ok], b[ok]])
    return NNModel(fb, vars_, pts, y[ok], k_neighbors(int(ok.sum())), weights,
                   mahalanobis_transform(pts))


def fit_node_model(method, node, selection, weights, costs=None, prior_weighted=False) -> NodeModel:
    if method == "K":
        return fit_kernel_model(node, selection, weights, costs, prior_weighted)
    if method == "N":
        return fit_nn_model(node, selection, weights, costs)
    return ConstantModel(_fallback(node, np.asarray(weights, dtype=float), costs))
