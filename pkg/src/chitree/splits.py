"""Variable selection and Gini split search.

Impurities are always of the form ``sum_k (n_k / n) g(t_k)`` where ``n_k`` is
the number of node samples in child ``k`` and ``g`` is the Gini impurity of
the prior-weighted class distribution in that child. Vectorized searches pick
the minimizing candidate; the impurity reported on a ``SplitDecision`` is
then recomputed by :func:`two_node_impurity` / :func:`four_node_impurity` so
that equal partitions always report bit-identical values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .dataset import assign_class, unit_costs
from .stats import (
    DiscriminantDirection,
    chi2_upper,
    interaction_codes,
    interaction_from_codes,
    leading_discriminant,
    linear_stat,
    main_effect_stat,
    trim_flags,
)

EXHAUSTIVE_MAX_LEVELS = 11


@dataclass(frozen=True)
class SplitDecision:
    """A committed binary split; ``goes_left`` implements the routing rules."""

    kind: str  # "numeric", "categorical", "linear" or "missing"
    variables: tuple[int, ...]
    threshold: float | None = None
    levels: frozenset | None = None
    coef: tuple[float, float] | None = None
    path: str = "main"
    impurity: float = float("nan")

    def goes_left(self, columns) -> np.ndarray:
        """Boolean mask over rows; ``columns`` maps variable index to that variable's values."""
        if self.kind == "numeric":
            x = columns[self.variables[0]]
            return np.isnan(x) | (x <= self.threshold)
        if self.kind == "categorical":
            return np.isin(columns[self.variables[0]], np.fromiter(self.levels, dtype=np.intp))
        if self.kind == "missing":
            return np.isnan(columns[self.variables[0]])
        x1 = columns[self.variables[0]]
        x2 = columns[self.variables[1]]
        with np.errstate(invalid="ignore"):
            z = self.coef[0] * x1 + self.coef[1] * x2
        return np.isnan(z) | (z <= self.threshold)


@dataclass
class SplitContext:
    """Everything a split search needs beyond the node's own rows."""

    weights: np.ndarray
    costs: np.ndarray | None = None
    n_total: int = 0
    m0: int = 5
    interactions: bool = True
    linear: bool = True
    max_features: int | None = None
    rng: np.random.Generator | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.costs is None:
            self.costs = unit_costs(self.weights.size)

    @property
    def n_classes(self) -> int:
        return self.weights.size


@dataclass
class Selection:
    path: str
    variables: tuple[int, ...]
    main_stats: dict = field(default_factory=dict)
    direction: DiscriminantDirection | None = None


@dataclass(frozen=True)
class RestrictedSplitPoints:
    values: np.ndarray
    d: int
    m0: int
    indices: np.ndarray


# ---------------------------------------------------------------------------
# impurity
# ---------------------------------------------------------------------------

def gini(probs) -> float:
    p = np.asarray(probs, dtype=float)
    return float(1.0 - (p * p).sum())


def _terms(counts, weights, n_parent):
    """Per-child ``(n_k / n) g(t_k)`` for count arrays of shape (..., J)."""
    counts = np.ascontiguousarray(counts, dtype=float)
    wc = counts * weights
    pt = wc.sum(-1)
    n = counts.sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = 1.0 - (wc * wc).sum(-1) / (pt * pt)
    return np.where(pt > 0, g, 0.0) * (n / n_parent)


def _default_weights(counts):
    return np.ones(np.shape(counts)[-1])


def two_node_impurity(left, right, weights=None) -> float:
    """Sample-fraction weighted Gini of two children given their class counts."""
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    w = _default_weights(left) if weights is None else weights
    t = _terms(np.stack([left, right]), w, left.sum() + right.sum())
    return float(t[0] + t[1])


def four_node_impurity(ll, lr, rl, rr, weights=None) -> float:
    """Sample-fraction weighted Gini of four grandchildren; empty ones weigh 0."""
    c = np.stack([np.asarray(a, dtype=float) for a in (ll, lr, rl, rr)])
    w = _default_weights(c) if weights is None else weights
    t = _terms(c, w, c.sum())
    return float((t[0] + t[1]) + (t[2] + t[3]))


def _onehot(y, n_classes):
    return np.eye(n_classes)[y]


# ---------------------------------------------------------------------------
# univariate searches
# ---------------------------------------------------------------------------

def _safe_midpoint(a, b):
    c = (a + b) / 2.0
    return a if not (a <= c < b) else c


def _scan_numeric(x, y, weights, allow_missing_split, m0):
    """Best ``x <= c`` split (missing rows left). Returns (c, left counts, right counts) or None."""
    J = weights.size
    miss = np.isnan(x)
    total = np.bincount(y, minlength=J).astype(float)
    mcounts = np.bincount(y[miss], minlength=J).astype(float)
    n = y.size
    best = None
    xs = x[~miss]
    if xs.size >= 2:
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        cum = np.cumsum(_onehot(y[~miss][order], J), axis=0)
        cut = np.flatnonzero(xs[1:] != xs[:-1])
        if cut.size:
            left = cum[cut] + mcounts
            right = total - left
            imp = _terms(left, weights, n) + _terms(right, weights, n)
            k = int(np.argmin(imp))
            best = (float(imp[k]), "numeric", _safe_midpoint(xs[cut[k]], xs[cut[k] + 1]),
                    left[k], right[k])
    n_miss = int(miss.sum())
    if allow_missing_split and n_miss >= m0 and n - n_miss >= m0:
        right = total - mcounts
        imp = float(_terms(np.stack([mcounts, right]), weights, n).sum())
        if best is None or imp < best[0]:
            best = (imp, "missing", None, mcounts, right)
    return best


def split_numeric(x, y, ctx: SplitContext, var: int = 0, allow_missing_split=True):
    """Best midpoint split ``X <= c``, or a missingness split when that is better.

    Returns ``None`` when no split separates the rows.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    best = _scan_numeric(x, y, ctx.weights, allow_missing_split, ctx.m0)
    if best is None:
        return None
    _, kind, c, left, right = best
    return SplitDecision(kind, (var,), threshold=c,
                         impurity=two_node_impurity(left, right, ctx.weights))


def _level_table(codes, y, J):
    """Class counts per level; missing is shifted to level index 0."""
    c = np.asarray(codes, dtype=np.intp) + 1
    nl = int(c.max()) + 1
    t = np.bincount(c * J + y, minlength=nl * J).reshape(nl, J).astype(float)
    present = np.flatnonzero(t.sum(1) > 0)
    return t[present], present - 1


def _ordering(table, weights, first_class):
    """Levels sorted by the weighted proportion of ``first_class``; ties by position."""
    wt = table * weights
    tot = wt.sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(tot > 0, wt[..., first_class] / tot, np.inf)
    return np.argsort(r, axis=-1, kind="stable")


def _first_class(table, weights, costs):
    """Class defining the binary (super)class: the lower of two present classes, else the cost-minimizing one."""
    counts = table.reshape(-1, table.shape[-1]).sum(0)
    present = np.flatnonzero(counts > 0)
    if present.size <= 2:
        return int(present[0])
    return assign_class(counts * weights, costs)


def proportion_order(codes, y, weights=None, costs=None) -> list[int]:
    """Level codes ordered by class-1 (or superclass) proportion, ties by level index."""
    y = np.asarray(y, dtype=np.intp)
    J = int(y.max()) + 1 if weights is None else len(weights)
    w = np.ones(J) if weights is None else np.asarray(weights, dtype=float)
    table, levs = _level_table(codes, y, J)
    fc = _first_class(table, w, unit_costs(J) if costs is None else costs)
    return [int(levs[i]) for i in _ordering(table, w, fc)]


def _prefix_best(table_sorted, weights, n_parent, include_full=False):
    """Min over prefix splits of ordered level rows; returns (imp, n_left_levels, left, right)."""
    cum = np.cumsum(table_sorted, axis=0)
    tot = cum[-1]
    k = cum.shape[0] if include_full else cum.shape[0] - 1
    if k <= 0:
        return None
    left = cum[:k]
    right = tot - left
    imp = _terms(left, weights, n_parent) + _terms(right, weights, n_parent)
    i = int(np.argmin(imp))
    return float(imp[i]), i + 1, left[i], right[i]


def _subset_masks(n):
    """All 2^(n-1)-1 proper subsets of n items that exclude the last item, ascending bitmask order."""
    m = np.arange(1, 2 ** (n - 1))
    return ((m[:, None] >> np.arange(n)) & 1).astype(float)


def _exhaustive_best(table, weights, n_parent):
    masks = _subset_masks(table.shape[0])
    left = masks @ table
    right = table.sum(0) - left
    imp = _terms(left, weights, n_parent) + _terms(right, weights, n_parent)
    i = int(np.argmin(imp))
    return masks[i].astype(bool)


def _dummy_lda_scores(table):
    """Discriminant coordinate of each level from LDA on projected 0-1 dummy vectors."""
    n = table.sum()
    p = table.sum(1) / n
    cov = np.diag(p) - np.outer(p, p)
    vals, vecs = np.linalg.eigh(cov)
    e = vecs[:, vals > 1e-10 * vals.max()]
    if e.shape[1] == 0:
        return np.zeros(table.shape[0])
    nj = table.sum(0)
    present = nj > 0
    means = (table[:, present].T @ e) / nj[present][:, None]
    grand = p @ e
    within = np.zeros((e.shape[1], e.shape[1]))
    for jj, j in enumerate(np.flatnonzero(present)):
        d = e - means[jj]
        within += (d * table[:, j][:, None]).T @ d
    g = means - grand
    between = (g * nj[present][:, None]).T @ g
    return e @ leading_discriminant(within, between)


def split_categorical(codes, y, ctx: SplitContext, var: int = 0):
    """Best ``X in S`` split; missing is its own level. ``None`` if one level only."""
    y = np.asarray(y, dtype=np.intp)
    w = ctx.weights
    table, levs = _level_table(codes, y, ctx.n_classes)
    n_lev = table.shape[0]
    if n_lev < 2:
        return None
    n = y.size
    jt = int(np.count_nonzero(table.sum(0)))
    left_mask = None
    if jt <= 2:
        order = _ordering(table, w, _first_class(table, w, ctx.costs))
        _, k, _, _ = _prefix_best(table[order], w, n)
        left_mask = np.zeros(n_lev, dtype=bool)
        left_mask[order[:k]] = True
    elif n_lev <= EXHAUSTIVE_MAX_LEVELS:
        left_mask = _exhaustive_best(table, w, n)
    elif jt <= 11 and n_lev > 20:
        groups = np.array([assign_class(row * w, ctx.costs) for row in table])
        ug = np.unique(groups)
        if ug.size >= 2:
            gtable = np.stack([table[groups == g].sum(0) for g in ug])
            gmask = _exhaustive_best(gtable, w, n)
            left_mask = np.isin(groups, ug[gmask])
    if left_mask is None:
        scores = _dummy_lda_scores(table)
        order = np.argsort(scores, kind="stable")
        _, k, _, _ = _prefix_best(table[order], w, n)
        left_mask = np.zeros(n_lev, dtype=bool)
        left_mask[order[:k]] = True
    left = table[left_mask].sum(0)
    right = table[~left_mask].sum(0)
    return SplitDecision("categorical", (var,), levels=frozenset(int(v) for v in levs[left_mask]),
                         impurity=two_node_impurity(left, right, w))


# ---------------------------------------------------------------------------
# two-level searches
# ---------------------------------------------------------------------------

def restricted_points(values, m0: int, n_total: int) -> RestrictedSplitPoints:
    """Candidate split values: ``d`` evenly spaced order statistics leaving ``m0`` rows per side."""
    v = np.sort(np.asarray(values, dtype=float))
    v = v[~np.isnan(v)]
    nt = v.size
    empty = RestrictedSplitPoints(np.empty(0), 0, m0, np.empty(0, dtype=np.intp))
    if nt < 2 * m0 or nt < 2:
        return empty
    fn = nt if n_total <= 100 else (100 * nt) // n_total
    d = min(max(fn, 9), nt - 2 * m0 + 1)
    j = np.arange(1, d + 1)
    idx = m0 + (j * (nt - 2 * m0)) // (d + 1)
    idx = np.clip(idx, 1, nt)
    pts = np.unique(v[idx - 1])
    pts = pts[pts < v[-1]]
    return RestrictedSplitPoints(pts, d, m0, idx)


def _grid_counts(top, grand, Y):
    """Grandchild class counts for every (top candidate, grandchild candidate) pair.

    ``top`` (n x A) and ``grand`` (n x B) are 0/1 left-membership matrices.
    Returns LL, LR, RL, RR arrays of shape (A, B, J).
    """
    J = Y.shape[1]
    ll = np.stack([top.T @ (grand * Y[:, j:j + 1]) for j in range(J)], axis=-1)
    ltot = top.T @ Y
    gtot = grand.T @ Y
    tot = Y.sum(0)
    lr = ltot[:, None, :] - ll
    rl = gtot[None, :, :] - ll
    rr = (tot - ltot)[:, None, :] - rl
    return ll, lr, rl, rr


def _grid_best(top, grand, Y, weights):
    """For each top candidate: best grandchild split on each side. Returns (value, d-index, e-index)."""
    n = Y.shape[0]
    ll, lr, rl, rr = _grid_counts(top, grand, Y)
    gl = _terms(ll, weights, n) + _terms(lr, weights, n)
    gr = _terms(rl, weights, n) + _terms(rr, weights, n)
    di = np.argmin(gl, axis=1)
    ei = np.argmin(gr, axis=1)
    a = np.arange(top.shape[1])
    return gl[a, di] + gr[a, ei], di, ei, (ll, lr, rl, rr)


def _numeric_masks(x, points):
    with np.errstate(invalid="ignore"):
        return (np.isnan(x)[:, None] | (x[:, None] <= points[None, :])).astype(float)


def _commit_numeric(x, c, var, path, impurity):
    xs = np.unique(x[~np.isnan(x)])
    above = xs[xs > c]
    thr = _safe_midpoint(c, above[0]) if above.size else c
    return SplitDecision("numeric", (var,), threshold=float(thr), path=path, impurity=impurity)


def _canonical4(parts, a, d, e, weights):
    ll, lr, rl, rr = parts
    return four_node_impurity(ll[a, d], lr[a, d], rl[a, e], rr[a, e], weights)


def split_pair_numeric(x1, x2, y, ctx: SplitContext, vars=(0, 1)):
    """Two-level search on two numeric variables; commits only the top split."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    Y = _onehot(y, ctx.n_classes)
    s1 = restricted_points(x1, ctx.m0, ctx.n_total).values
    s2 = restricted_points(x2, ctx.m0, ctx.n_total).values
    if s1.size == 0 or s2.size == 0:
        return None
    results = []
    for a, b, sa, sb in ((x1, x2, s1, s2), (x2, x1, s2, s1)):
        val, di, ei, parts = _grid_best(_numeric_masks(a, sa), _numeric_masks(b, sb), Y, ctx.weights)
        k = int(np.argmin(val))
        results.append((_canonical4(parts, k, di[k], ei[k], ctx.weights), sa[k], a))
    (d1, c1, _), (d2, c2, _) = results
    if d1 <= d2:
        return _commit_numeric(x1, c1, vars[0], "interaction", d1)
    return _commit_numeric(x2, c2, vars[1], "interaction", d2)


def _side_best_categorical(level_table, weights, costs, n_parent, jt_node):
    """Best prefix (incl. the trivial full set) of one child's levels under its own ordering."""
    present = level_table.sum(1) > 0
    if not present.any():
        return 0.0, None
    fc = _first_class(level_table, weights, costs) if jt_node > 2 else None
    if fc is None:
        cls = np.flatnonzero(level_table.sum(0) > 0)
        fc = int(cls[0]) if cls.size else 0
    order = _ordering(level_table, weights, fc)
    order = order[present[order]]
    imp, k, _, _ = _prefix_best(level_table[order], weights, n_parent, include_full=True)
    return imp, order[:k]


def split_pair_mixed(xn, xc, y, ctx: SplitContext, vars=(0, 1)):
    """Two-level search with one numeric (``xn``) and one categorical (``xc``) variable."""
    xn = np.asarray(xn, dtype=float)
    y = np.asarray(y, dtype=np.intp)
    J = ctx.n_classes
    w = ctx.weights
    n = y.size
    Y = _onehot(y, J)
    lev = np.asarray(xc, dtype=np.intp) + 1
    present_levels = np.unique(lev)
    if present_levels.size < 2:
        return None
    lev = np.searchsorted(present_levels, lev)
    nl = present_levels.size
    s1 = restricted_points(xn, ctx.m0, ctx.n_total).values
    if s1.size == 0:
        return None
    jt = int(np.count_nonzero(Y.sum(0)))

    # Step 1: numeric top split, categorical prefix splits in each child.
    cm = _numeric_masks(xn, s1)
    z = np.zeros((n, nl * J))
    z[np.arange(n), lev * J + y] = 1.0
    lt = (cm.T @ z).reshape(s1.size, nl, J)
    rt = z.sum(0).reshape(nl, J) - lt
    best = None
    for k in range(s1.size):
        il, sl = _side_best_categorical(lt[k], w, ctx.costs, n, jt)
        ir, sr = _side_best_categorical(rt[k], w, ctx.costs, n, jt)
        v = il + ir
        if best is None or v < best[0]:
            best = (v, k, sl, sr)
    _, kstar, sl, sr = best
    cstar = s1[kstar]

    def four(table, subset):
        inn = table[subset].sum(0) if subset is not None else np.zeros(J)
        return inn, table.sum(0) - inn

    ll, lr = four(lt[kstar], sl)
    rl, rr = four(rt[kstar], sr)
    delta1 = four_node_impurity(ll, lr, rl, rr, w)

    # Step 2: categorical top splits from the orderings on each side of c*.
    def cat_top(side_table):
        fc = _first_class(side_table, w, ctx.costs) if jt > 2 else int(np.flatnonzero(Y.sum(0))[0])
        order = _ordering(side_table, w, fc)
        pres = side_table.sum(1) > 0
        order = np.concatenate([order[pres[order]], order[~pres[order]]])
        prefixes = np.zeros((nl - 1, nl))
        for i in range(nl - 1):
            prefixes[i, order[:i + 1]] = 1.0
        top = prefixes[:, lev].T
        val, di, ei, parts = _grid_best(top, cm, Y, w)
        i = int(np.argmin(val))
        return _canonical4(parts, i, di[i], ei[i], w), order[:i + 1]

    delta2, u = cat_top(lt[kstar])
    delta3, v = cat_top(rt[kstar])
    if delta1 <= min(delta2, delta3):
        return _commit_numeric(xn, cstar, vars[0], "interaction", delta1)
    subset, delta = (u, delta2) if delta2 <= delta3 else (v, delta3)
    return SplitDecision("categorical", (vars[1],), path="interaction", impurity=delta,
                         levels=frozenset(int(present_levels[i]) - 1 for i in subset))


def _top_candidates(table2, weights, costs, jt, exhaustive_ok):
    """Top-level level subsets (rows of a 0/1 matrix) for the categorical pair search."""
    k1 = table2.shape[0]
    if exhaustive_ok and k1 <= EXHAUSTIVE_MAX_LEVELS:
        return _subset_masks(k1)
    marg = table2.sum(1)
    fc = _first_class(marg, weights, costs)
    order = _ordering(marg, weights, fc)
    masks = np.zeros((k1 - 1, k1))
    for i in range(k1 - 1):
        masks[i, order[:i + 1]] = 1.0
    return masks


def _pair_categorical_role(t3, weights, costs, n, jt):
    """Two-level search with one variable on top: rows of ``t3`` (k1 x k2 x J) index the top variable."""
    k1, k2, J = t3.shape
    if k1 < 2:
        return None
    tops = _top_candidates(t3, weights, costs, jt, exhaustive_ok=(jt <= 2 or k1 <= 5))
    tl = np.einsum("ua,abj->ubj", tops, t3)
    tr = t3.sum(0)[None] - tl
    if jt > 2:
        marg = t3.sum(0)
        fixed = _ordering(marg, weights, _first_class(marg, weights, costs))
    best = None
    sides = []
    for side in (tl, tr):
        if jt > 2:
            order = np.broadcast_to(fixed, side.shape[:2])
        else:
            fc = int(np.flatnonzero(t3.sum((0, 1)))[0])
            order = _ordering(side, weights, fc)
        srt = np.take_along_axis(side, order[..., None], axis=1)
        cum = np.cumsum(srt, axis=1)
        tot = cum[:, -1:, :]
        imp = _terms(cum, weights, n) + _terms(tot - cum, weights, n)
        i = np.argmin(imp, axis=1)
        u = np.arange(side.shape[0])
        sides.append((imp[u, i], i, cum[u, i], (tot[:, 0, :] - cum[u, i])))
    total = sides[0][0] + sides[1][0]
    best = int(np.argmin(total))
    ll, lr = sides[0][2][best], sides[0][3][best]
    rl, rr = sides[1][2][best], sides[1][3][best]
    return four_node_impurity(ll, lr, rl, rr, weights), tops[best].astype(bool)


def split_pair_categorical(c1, c2, y, ctx: SplitContext, vars=(0, 1)):
    """Two-level search on two categorical variables; commits only the top split."""
    y = np.asarray(y, dtype=np.intp)
    J = ctx.n_classes
    a = np.asarray(c1, dtype=np.intp) + 1
    b = np.asarray(c2, dtype=np.intp) + 1
    la, a = np.unique(a, return_inverse=True)
    lb, b = np.unique(b, return_inverse=True)
    if la.size < 2 or lb.size < 2:
        return None
    t3 = np.bincount((a * lb.size + b) * J + y, minlength=la.size * lb.size * J)
    t3 = t3.reshape(la.size, lb.size, J).astype(float)
    jt = int(np.count_nonzero(t3.sum((0, 1))))
    n = y.size
    r1 = _pair_categorical_role(t3, ctx.weights, ctx.costs, n, jt)
    r2 = _pair_categorical_role(t3.transpose(1, 0, 2), ctx.weights, ctx.costs, n, jt)
    if r1[0] <= r2[0]:
        return SplitDecision("categorical", (vars[0],), path="interaction", impurity=r1[0],
                             levels=frozenset(int(v) - 1 for v in la[r1[1]]))
    return SplitDecision("categorical", (vars[1],), path="interaction", impurity=r2[0],
                         levels=frozenset(int(v) - 1 for v in lb[r2[1]]))


# ---------------------------------------------------------------------------
# variable selection and orchestration
# ---------------------------------------------------------------------------

class NodeView:
    """Read-only view of a dataset restricted to a set of rows."""

    def __init__(self, dataset, rows):
        self.dataset = dataset
        self.rows = np.asarray(rows, dtype=np.intp)
        self.y = dataset.y[self.rows]
        self._cols = {}

    def col(self, k):
        c = self._cols.get(k)
        if c is None:
            c = self._cols[k] = self.dataset.columns[k][self.rows]
        return c

    __getitem__ = col

    def categorical(self, k) -> bool:
        return self.dataset.kinds[k] == "c"

    @property
    def n(self) -> int:
        return int(self.rows.size)

    def is_constant(self, k) -> bool:
        x = self.col(k)
        if self.categorical(k):
            return x.size == 0 or x.min() == x.max()
        v = x[~np.isnan(x)]
        return v.size < 2 or v.min() == v.max()


def selection_thresholds(K: int, K1: int) -> tuple[float, float, float]:
    """Bonferroni levels (alpha, beta, gamma) for main, interaction and linear tests."""
    alpha = 0.05 / K if K > 0 else 0.0
    beta = 0.05 / (K * (K - 1)) if K > 1 else 0.0
    gamma = 0.05 / (K1 * (K1 - 1)) if K1 > 1 else 0.0
    return alpha, beta, gamma


def candidate_variables(node: NodeView, ctx: SplitContext) -> list[int]:
    cands = [k for k in range(node.dataset.n_features) if not node.is_constant(k)]
    if ctx.max_features is not None and len(cands) > ctx.max_features:
        rng = ctx.rng if ctx.rng is not None else np.random.default_rng(0)
        pick = rng.choice(len(cands), size=ctx.max_features, replace=False)
        cands = [cands[i] for i in sorted(pick)]
    return cands


def select_variables(node: NodeView, ctx: SplitContext, candidates=None) -> Selection | None:
    """Main-effect tests, then interaction tests, then (optionally) linear tests."""
    cands = candidate_variables(node, ctx) if candidates is None else list(candidates)
    K = len(cands)
    if K == 0:
        return None
    if K == 1:
        return Selection("main", (cands[0],), {cands[0]: np.inf})
    J = ctx.n_classes
    y = node.y
    wm = np.array([main_effect_stat(node.col(k), y, J, node.categorical(k)) for k in cands])
    stats = dict(zip(cands, wm))
    numeric = [k for k in cands if not node.categorical(k)]
    alpha, beta, gamma = selection_thresholds(K, len(numeric))
    top = int(np.argmax(wm))
    if wm[top] > chi2_upper(alpha):
        return Selection("main", (cands[top],), stats)
    if ctx.interactions:
        jt = int(np.count_nonzero(np.bincount(y, minlength=J)))
        codes = [interaction_codes(node.col(k), y.size, jt, node.categorical(k)) for k in cands]
        best, pair = -1.0, None
        for i, j in itertools.combinations(range(K), 2):
            wi = interaction_from_codes(*codes[i], *codes[j], y, J)
            if wi > best:
                best, pair = wi, (cands[i], cands[j])
        if best > chi2_upper(beta):
            return Selection("interaction", pair, stats)
    if ctx.linear and len(numeric) > 1:
        best, pair, direction = -1.0, None, None
        flags = {k: trim_flags(node.col(k), y) for k in numeric if not np.isnan(node.col(k)).any()}
        for a, b in itertools.combinations(numeric, 2):
            f = (flags[a], flags[b]) if a in flags and b in flags else None
            wl, dirn = linear_stat(node.col(a), node.col(b), y, J, f)
            if wl > best:
                best, pair, direction = wl, (a, b), dirn
        if direction is not None and best > chi2_upper(gamma):
            return Selection("linear", pair, stats, direction)
    return Selection("fallback", (cands[top],), stats)


def _univariate(node, k, ctx, path):
    if node.categorical(k):
        s = split_categorical(node.col(k), node.y, ctx, var=k)
    else:
        s = split_numeric(node.col(k), node.y, ctx, var=k)
    if s is not None:
        s = SplitDecision(s.kind, s.variables, s.threshold, s.levels, s.coef, path, s.impurity)
    return s


def _linear_split(node, sel, ctx):
    a, b = sel.variables
    coef = sel.direction.coef
    with np.errstate(invalid="ignore"):
        z = coef[0] * node.col(a) + coef[1] * node.col(b)
    s = split_numeric(z, node.y, ctx, allow_missing_split=False)
    if s is None or s.kind != "numeric":
        return None
    return SplitDecision("linear", (a, b), threshold=s.threshold,
                         coef=(float(coef[0]), float(coef[1])), path="linear", impurity=s.impurity)


def _larger_main(node, sel, ctx):
    a, b = sel.variables
    wa = sel.main_stats.get(a, 0.0)
    wb = sel.main_stats.get(b, 0.0)
    return a if wa >= wb else b


def split_for_selection(node: NodeView, sel: Selection, ctx: SplitContext):
    """Turn a variable selection into a committed split (or None)."""
    if sel.path in ("main", "fallback"):
        return _univariate(node, sel.variables[0], ctx, sel.path)
    if sel.path == "linear":
        s = _linear_split(node, sel, ctx)
        if s is None:
            k = max(sel.main_stats, key=lambda v: (sel.main_stats[v], -v))
            s = _univariate(node, k, ctx, "fallback")
        return s
    a, b = sel.variables
    ca, cb = node.categorical(a), node.categorical(b)
    if not ca and not cb:
        s = split_pair_numeric(node.col(a), node.col(b), node.y, ctx, vars=(a, b))
    elif ca and cb:
        s = split_pair_categorical(node.col(a), node.col(b), node.y, ctx, vars=(a, b))
    elif cb:
        s = split_pair_mixed(node.col(a), node.col(b), node.y, ctx, vars=(a, b))
    else:
        s = split_pair_mixed(node.col(b), node.col(a), node.y, ctx, vars=(b, a))
    if s is None:
        s = _univariate(node, _larger_main(node, sel, ctx), ctx, "interaction")
    return s


def choose_split(node: NodeView, ctx: SplitContext):
    """Select variables and split the node. Returns ``(split or None, selection or None)``."""
    if np.count_nonzero(np.bincount(node.y, minlength=ctx.n_classes)) < 2:
        return None, None
    sel = select_variables(node, ctx)
    if sel is None:
        return None, None
    return split_for_selection(node, sel, ctx), sel
