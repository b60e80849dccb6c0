"""Tree growth, cost-complexity pruning, prediction, serialization and export."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .dataset import MISSING, Dataset, DatasetError, Priors, check_costs, class_weights
from .node_models import NodeModel, fit_node_model
from .splits import NodeView, SplitContext, SplitDecision, choose_split, select_variables

FORMAT_VERSION = 1
METHODS = ("S", "K", "N")


@dataclass
class GrowConfig:
    """Settings for growing (and pruning) one tree.

    ``method`` is ``"S"`` (constant node models, linear splits enabled), ``"K"``
    (kernel node models) or ``"N"`` (nearest-neighbor node models). ``linear``
    defaults to enabled for S only. ``se_rule`` of 0 selects the subtree with
    minimum CV cost; 1 gives the one-SE rule.
    """

    method: str = "S"
    m0: int = 5
    max_depth: int = 30
    folds: int = 10
    seed: int = 1
    prune: bool = True
    se_rule: float = 0.0
    interactions: bool = True
    linear: bool | None = None
    max_features: int | None = None
    prior_weighted: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.m0 < 1:
            raise ValueError("m0 must be >= 1")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.linear is None:
            self.linear = self.method == "S"

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class Node:
    id: int
    depth: int
    counts: np.ndarray
    model: NodeModel
    risk: float
    path: str | None = None
    split: SplitDecision | None = None
    left: "Node | None" = None
    right: "Node | None" = None
    collapse_alpha: float = math.inf

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def walk(self):
        yield self
        if self.split is not None:
            yield from self.left.walk()
            yield from self.right.walk()


@dataclass(eq=False)
class Tree:
    root: Node
    names: tuple
    kinds: tuple
    levels: tuple
    classes: tuple
    class_name: str
    priors: np.ndarray
    priors_estimated: bool
    costs: np.ndarray
    config: GrowConfig
    pruning: dict = field(default_factory=dict)

    @property
    def n_classes(self):
        return len(self.classes)

    def nodes(self):
        return list(self.root.walk())

    def leaves(self, alpha: float | None = None):
        """Leaves of the subtree selected by penalty ``alpha`` (the whole tree if None)."""
        out, stack = [], [self.root]
        while stack:
            n = stack.pop()
            if _is_leaf_at(n, alpha):
                out.append(n)
            else:
                stack.extend((n.right, n.left))
        return out

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    def predict_codes(self, columns, n_rows: int, alpha: float | None = None) -> np.ndarray:
        """Class codes for ``n_rows`` rows whose predictor columns are ``columns[k]``."""
        out = np.empty(n_rows, dtype=np.intp)
        leaf_ids = np.empty(n_rows, dtype=np.int64)
        _route(self.root, columns, np.arange(n_rows), out, leaf_ids, alpha)
        return out

    def apply(self, columns, n_rows: int) -> np.ndarray:
        """Id of the leaf each row lands in."""
        out = np.empty(n_rows, dtype=np.intp)
        leaf_ids = np.empty(n_rows, dtype=np.int64)
        _route(self.root, columns, np.arange(n_rows), out, leaf_ids, None)
        return leaf_ids

    def predict_dataset(self, dataset: Dataset, alpha: float | None = None) -> np.ndarray:
        return self.predict_codes(dataset.columns, dataset.n_rows, alpha)


class _Columns:
    """Column mapping restricted to a row subset, computed lazily."""

    def __init__(self, columns, rows):
        self.columns = columns
        self.rows = rows
        self._cache = {}

    def __getitem__(self, k):
        c = self._cache.get(k)
        if c is None:
            c = self._cache[k] = self.columns[k][self.rows]
        return c


def _is_leaf_at(node, alpha):
    return node.split is None or (alpha is not None and node.collapse_alpha <= alpha)


def _route(node, columns, rows, out, leaf_ids, alpha):
    if rows.size == 0:
        return
    if _is_leaf_at(node, alpha):
        out[rows] = node.model.predict(_Columns(columns, rows), rows.size)
        leaf_ids[rows] = node.id
        return
    left = node.split.goes_left(_Columns(columns, rows))
    _route(node.left, columns, rows[left], out, leaf_ids, alpha)
    _route(node.right, columns, rows[~left], out, leaf_ids, alpha)


# ---------------------------------------------------------------------------
# growing
# ---------------------------------------------------------------------------

def resolve_priors(dataset: Dataset, priors: Priors | None) -> Priors:
    """User priors are kept; otherwise estimate from class proportions (absent classes get 0)."""
    if priors is not None and not priors.estimated:
        return priors
    counts = dataset.class_counts
    return Priors(counts / counts.sum(), estimated=True)


def grow(dataset: Dataset, config: GrowConfig, priors: Priors | None = None, costs=None,
         rng: np.random.Generator | None = None) -> Tree:
    """Grow an unpruned tree."""
    pri = resolve_priors(dataset, priors)
    costs = check_costs(costs, dataset.n_classes)
    weights = class_weights(dataset.class_counts, pri.values)
    ctx = SplitContext(weights=weights, costs=costs, n_total=dataset.n_rows, m0=config.m0,
                       interactions=config.interactions, linear=config.linear,
                       max_features=config.max_features,
                       rng=rng if rng is not None else np.random.default_rng(config.seed))
    root = _grow_node(dataset, np.arange(dataset.n_rows), 0, 1, ctx, config)
    return Tree(root, dataset.names, dataset.kinds, dataset.levels, dataset.classes,
                dataset.class_name, pri.values, pri.estimated, costs, config)


def _grow_node(ds, rows, depth, nid, ctx, cfg):
    view = NodeView(ds, rows)
    J = ctx.n_classes
    counts = np.bincount(view.y, minlength=J)
    split = sel = None
    if np.count_nonzero(counts) > 1:
        if rows.size >= 2 * cfg.m0 and depth < cfg.max_depth:
            split, sel = choose_split(view, ctx)
        elif cfg.method != "S":
            sel = select_variables(view, ctx)
    model = fit_node_model(cfg.method, view, sel, ctx.weights, ctx.costs, cfg.prior_weighted)
    pred = model.predict(view, rows.size)
    risk = float((ctx.costs[pred, view.y] * ctx.weights[view.y]).sum())
    node = Node(nid, depth, counts, model, risk, path=None if sel is None else sel.path)
    if split is not None:
        go_left = split.goes_left(view)
        nl = int(go_left.sum())
        if 0 < nl < rows.size:
            node.split = split
            node.left = _grow_node(ds, rows[go_left], depth + 1, 2 * nid, ctx, cfg)
            node.right = _grow_node(ds, rows[~go_left], depth + 1, 2 * nid + 1, ctx, cfg)
    return node


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------

def _weakest_links(node, acc):
    if node.split is None or node.collapse_alpha < math.inf:
        return node.risk, 1
    rl, nl = _weakest_links(node.left, acc)
    rr, nr = _weakest_links(node.right, acc)
    r, leaves = rl + rr, nl + nr
    acc.append((max(0.0, (node.risk - r) / (leaves - 1)), node))
    return r, leaves


def cost_complexity_sequence(tree: Tree) -> list[float]:
    """Assign each internal node its collapse penalty and return the penalty sequence.

    The returned list starts at 0 (the full tree, or its zero-penalty
    reduction) and ends at the penalty that collapses the root. Values are
    strictly increasing and the subtrees they index are nested.
    """
    for n in tree.root.walk():
        n.collapse_alpha = math.inf
    seq: list[float] = []
    prev = -math.inf
    while tree.root.split is not None and tree.root.collapse_alpha == math.inf:
        acc: list = []
        _weakest_links(tree.root, acc)
        gmin = max(min(g for g, _ in acc), prev)
        tol = 1e-12 * max(1.0, abs(gmin))
        for g, n in acc:
            if g <= gmin + tol:
                n.collapse_alpha = gmin
        if seq and gmin <= seq[-1] + tol:
            continue
        seq.append(gmin)
        prev = gmin
    if not seq or seq[0] > 0:
        seq.insert(0, 0.0)
    return seq


def _candidate_alphas(seq):
    out = [math.sqrt(a * b) for a, b in zip(seq[:-1], seq[1:])]
    out.append(math.inf if len(seq) > 1 else 0.0)
    return out


def stratified_folds(y, folds: int, seed: int) -> np.ndarray:
    """Fold index per row; each class is spread evenly over the folds."""
    rng = np.random.default_rng([seed, 7919])
    out = np.empty(y.size, dtype=np.intp)
    offset = 0
    for j in np.unique(y):
        idx = np.flatnonzero(y == j)
        idx = idx[rng.permutation(idx.size)]
        out[idx] = (offset + np.arange(idx.size)) % folds
        offset += idx.size
    return out


def _fold_costs(dataset, fold_id, f, config, priors, costs, weights, cands):
    train = np.flatnonzero(fold_id != f)
    test = np.flatnonzero(fold_id == f)
    sub = dataset.subset(train)
    t = grow(sub, config, priors if priors is not None and not priors.estimated else None, costs,
             rng=np.random.default_rng([config.seed, 104729, f]))
    cost_complexity_sequence(t)
    cols = [c[test] for c in dataset.columns]
    yt = dataset.y[test]
    rows = []
    for a in cands:
        pred = t.predict_codes(cols, test.size, alpha=a)
        rows.append(costs[pred, yt] * weights[yt])
    return test, np.array(rows)


def prune(tree: Tree, dataset: Dataset, config: GrowConfig | None = None, n_jobs=None) -> Tree:
    """Cost-complexity prune ``tree`` using V-fold CV of the whole grow procedure.

    The tree is modified in place (collapsed subtrees are removed) and
    returned. ``tree.pruning`` records the penalty sequence, the CV cost of
    each subtree in it, and the chosen index.
    """
    config = config or tree.config
    seq = cost_complexity_sequence(tree)
    cands = _candidate_alphas(seq)
    priors = Priors(tree.priors, tree.priors_estimated)
    weights = class_weights(dataset.class_counts, tree.priors)
    fold_id = stratified_folds(dataset.y, config.folds, config.seed)
    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fold_costs)(dataset, fold_id, f, config, priors, tree.costs, weights, cands)
        for f in range(config.folds))
    losses = np.zeros((len(cands), dataset.n_rows))
    for test, rows in results:
        losses[:, test] = rows
    # exactly rounded sums so equal losses tie exactly regardless of fold order
    cv = np.array([math.fsum(row) for row in losses])
    se = losses.std(axis=1) * math.sqrt(dataset.n_rows)
    best = int(np.argmin(cv))
    limit = cv[best] + config.se_rule * se[best] + 1e-12 * max(1.0, cv[best])
    chosen = max(k for k in range(len(cands)) if cv[k] <= limit)
    alpha = seq[chosen]
    _cut(tree.root, alpha)
    tree.pruning = {"alphas": seq, "cv_costs": cv.tolist(), "cv_se": se.tolist(),
                    "chosen": chosen, "alpha": alpha}
    return tree


def _cut(node, alpha):
    if node.split is None:
        return
    if node.collapse_alpha <= alpha:
        node.split = node.left = node.right = None
        return
    _cut(node.left, alpha)
    _cut(node.right, alpha)


def internal_ids_at(tree: Tree, alpha: float) -> set:
    """Ids of internal nodes in the subtree selected by penalty ``alpha``."""
    out = set()
    stack = [tree.root]
    while stack:
        n = stack.pop()
        if not _is_leaf_at(n, alpha):
            out.add(n.id)
            stack.extend((n.left, n.right))
    return out


def build_tree(dataset: Dataset, config: GrowConfig, priors=None, costs=None, n_jobs=None,
               rng=None) -> Tree:
    """Grow and (if ``config.prune``) prune."""
    t = grow(dataset, config, priors, costs, rng=rng)
    if config.prune:
        prune(t, dataset, config, n_jobs=n_jobs)
    return t


def training_cost(tree: Tree, dataset: Dataset) -> tuple[int, float]:
    """(number of misclassified rows, mean misclassification cost) on ``dataset``."""
    pred = tree.predict_dataset(dataset)
    return int((pred != dataset.y).sum()), float(tree.costs[pred, dataset.y].mean())


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _split_to_dict(s: SplitDecision, tree: Tree):
    d = {"kind": s.kind, "variables": [tree.names[v] for v in s.variables], "path": s.path,
         "impurity": _num(s.impurity)}
    if s.threshold is not None:
        d["threshold"] = _num(s.threshold)
    if s.coef is not None:
        d["coef"] = list(s.coef)
    if s.levels is not None:
        lev = tree.levels[s.variables[0]]
        d["levels"] = [None if c == MISSING else lev[c] for c in sorted(s.levels)]
    return d


def _split_from_dict(d, names, levels):
    idx = {n: i for i, n in enumerate(names)}
    vars_ = tuple(idx[v] for v in d["variables"])
    lv = None
    if "levels" in d:
        lookup = {l: i for i, l in enumerate(levels[vars_[0]])}
        lv = frozenset(MISSING if l is None else lookup[l] for l in d["levels"])
    imp = d.get("impurity")
    return SplitDecision(d["kind"], vars_, threshold=d.get("threshold"), levels=lv,
                         coef=tuple(d["coef"]) if "coef" in d else None, path=d["path"],
                         impurity=float("nan") if imp is None else imp)


def _node_to_dict(n: Node, tree):
    d = {"id": n.id, "depth": n.depth, "counts": n.counts.tolist(), "risk": n.risk,
         "path": n.path, "model": n.model.to_dict()}
    if n.split is not None:
        d["split"] = _split_to_dict(n.split, tree)
        d["left"] = _node_to_dict(n.left, tree)
        d["right"] = _node_to_dict(n.right, tree)
    return d


def _node_from_dict(d, names, levels):
    n = Node(d["id"], d["depth"], np.asarray(d["counts"], dtype=np.int64),
             NodeModel.from_dict(d["model"]), d["risk"], d.get("path"))
    if "split" in d:
        n.split = _split_from_dict(d["split"], names, levels)
        n.left = _node_from_dict(d["left"], names, levels)
        n.right = _node_from_dict(d["right"], names, levels)
    return n


def schema_dict(obj) -> dict:
    return {"names": list(obj.names), "kinds": list(obj.kinds),
            "levels": [None if l is None else list(l) for l in obj.levels],
            "classes": [str(c) for c in obj.classes], "class_name": obj.class_name}


def tree_to_dict(tree: Tree) -> dict:
    pr = dict(tree.pruning)
    if "alpha" in pr:
        pr["alpha"] = _num(pr["alpha"])
    return {"format_version": FORMAT_VERSION, "type": "tree", "schema": schema_dict(tree),
            "priors": tree.priors.tolist(), "priors_estimated": tree.priors_estimated,
            "costs": tree.costs.tolist(), "config": tree.config.to_dict(), "pruning": pr,
            "root": _node_to_dict(tree.root, tree)}


def tree_from_dict(d: dict) -> Tree:
    if d.get("format_version") != FORMAT_VERSION or d.get("type") != "tree":
        raise DatasetError("not a tree model file of a supported version")
    s = d["schema"]
    levels = tuple(None if l is None else tuple(l) for l in s["levels"])
    names = tuple(s["names"])
    return Tree(_node_from_dict(d["root"], names, levels), names, tuple(s["kinds"]), levels,
                tuple(s["classes"]), s["class_name"], np.asarray(d["priors"]),
                d["priors_estimated"], np.asarray(d["costs"]), GrowConfig(**d["config"]),
                d.get("pruning", {}))


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _fmt(x):
    return f"{x:.4g}"


def describe_split(s: SplitDecision, names, levels) -> str:
    v = [names[i] for i in s.variables]
    if s.kind == "numeric":
        return f"{v[0]} <= {_fmt(s.threshold)} or NA"
    if s.kind == "missing":
        return f"{v[0]} = NA"
    if s.kind == "linear":
        return f"{_fmt(s.coef[0])} * {v[0]} + {_fmt(s.coef[1])} * {v[1]} <= {_fmt(s.threshold)} or NA"
    lev = levels[s.variables[0]]
    items = ", ".join("NA" if c == MISSING else str(lev[c]) for c in sorted(s.levels))
    return f"{v[0]} in {{{items}}}"


def _leaf_text(n: Node, tree: Tree) -> str:
    cls = tree.classes[n.model.fallback]
    if n.model.kind == "constant":
        return f"class {cls}"
    vars_ = ", ".join(tree.names[v] for v in n.model.variables)
    return f"{n.model.kind} model on {vars_}, majority class {cls}"


def export_text(tree: Tree) -> str:
    """Indented outline; each leaf shows its predicted class and sample size."""
    lines = []

    def visit(n, indent):
        pad = "  " * indent
        if n.split is None:
            lines.append(f"{pad}Node {n.id}: n = {n.n}, {_leaf_text(n, tree)}")
            return
        lines.append(f"{pad}Node {n.id}: {describe_split(n.split, tree.names, tree.levels)}")
        visit(n.left, indent + 1)
        visit(n.right, indent + 1)

    visit(tree.root, 0)
    return "\n".join(lines) + "\n"


def export_dot(tree: Tree) -> str:
    """Graphviz digraph; the left edge is taken when the split condition holds."""
    out = ["digraph tree {", '  node [shape=box, fontname="Helvetica"];']

    def q(s):
        return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

    def visit(n):
        if n.split is None:
            out.append(f"  n{n.id} [label={q(f'n = {n.n}: ' + _leaf_text(n, tree))}, shape=ellipse];")
            return
        out.append(f"  n{n.id} [label={q(describe_split(n.split, tree.names, tree.levels))}];")
        out.append(f'  n{n.id} -> n{n.left.id} [label="yes"];')
        out.append(f'  n{n.id} -> n{n.right.id} [label="no"];')
        visit(n.left)
        visit(n.right)

    visit(tree.root)
    out.append("}")
    return "\n".join(out) + "\n"
