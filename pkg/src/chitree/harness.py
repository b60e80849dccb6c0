"""Synthetic data generators, the root-selection bias experiment and CV evaluation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed

from .dataset import Dataset, DatasetError, Priors, check_costs, class_weights
from .ensemble import fit_bagged, fit_forest
from .splits import NodeView, SplitContext, choose_split
from .tree import GrowConfig, build_tree, resolve_priors, stratified_folds

GENERATORS = ("chessboard", "circle_lines", "bias_independence", "bias_dependence")

# joint distribution of (X2, X3) in the dependent bias scenario, in units of 1/24
DEPENDENT_X2_X3 = np.array([
    [2, 2, 1, 1, 1, 1],
    [1, 1, 2, 2, 1, 1],
    [1, 1, 1, 1, 2, 2],
]) / 24.0


def _levels(k):
    return tuple(str(i) for i in range(1, k + 1))


def _dataset(numeric: dict, categorical: dict, y, classes, order):
    """Assemble a Dataset from named numeric arrays and 0-based categorical codes."""
    names, kinds, cols, levels = [], [], [], []
    for name in order:
        names.append(name)
        if name in numeric:
            kinds.append("n")
            cols.append(np.asarray(numeric[name], dtype=float))
            levels.append(None)
        else:
            codes, k = categorical[name]
            kinds.append("c")
            cols.append(np.asarray(codes, dtype=np.intp))
            levels.append(_levels(k))
    return Dataset(tuple(names), tuple(kinds), tuple(cols), tuple(levels), np.asarray(y),
                   tuple(classes), "class")


def chessboard_cell(x1, x2):
    """Row/column index (0..3) of a point on the 4x4 board over [-1, 1]^2."""
    i = np.clip(np.floor((np.asarray(x1) + 1) / 0.5), 0, 3).astype(int)
    j = np.clip(np.floor((np.asarray(x2) + 1) / 0.5), 0, 3).astype(int)
    return i, j


def chessboard_oracle(x1, x2) -> np.ndarray:
    """Class code (0 for squares with even i+j, 1 otherwise)."""
    i, j = chessboard_cell(x1, x2)
    return (i + j) % 2


def gen_chessboard(n: int = 1000, seed: int = 1) -> Dataset:
    """Two classes on alternating squares of a 4x4 board plus eight U(0,1) noise variables."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng([seed, 1])
    y = rng.integers(0, 2, size=n)
    # eight squares of each colour; pick one uniformly, then a uniform point inside it
    sq = rng.integers(0, 8, size=n)
    i = sq // 2
    j = 2 * (sq % 2) + ((i + y) % 2)
    x1 = -1 + 0.5 * (i + rng.random(n))
    x2 = -1 + 0.5 * (j + rng.random(n))
    num = {"X1": x1, "X2": x2}
    for k in range(3, 11):
        num[f"X{k}"] = rng.random(n)
    return _dataset(num, {}, y, ("1", "2"), [f"X{k}" for k in range(1, 11)])


def gen_circle_lines(n: int = 300, seed: int = 1) -> Dataset:
    """Class 1 on the unit circle, classes 2 and 3 on the two diagonals; X3-X8 are noise."""
    if n < 3 or n % 3:
        raise ValueError("n must be a positive multiple of 3")
    rng = np.random.default_rng([seed, 2])
    m = n // 3
    theta = rng.uniform(0, 2 * np.pi, m)
    u2 = rng.uniform(-1, 1, m)
    u3 = rng.uniform(-1, 1, m)
    x1 = np.concatenate([np.cos(theta), u2, u3])
    x2 = np.concatenate([np.sin(theta), u2, -u3])
    y = np.repeat(np.arange(3), m)
    num = {"X1": x1, "X2": x2}
    for k in range(3, 6):
        num[f"X{k}"] = rng.random(n)
    cat = {f"X{k}": (rng.integers(0, 21, size=n), 21) for k in range(6, 9)}
    return _dataset(num, cat, y, ("1", "2", "3"), [f"X{k}" for k in range(1, 9)])


def gen_bias_scenario(kind: str, n: int = 500, seed: int = 1) -> Dataset:
    """Null-model data: a fair binary class independent of six predictors.

    ``kind`` is ``"independence"`` (mutually independent predictors) or
    ``"dependence"`` (X4, X5 correlated normals and X2, X3 jointly dependent).
    """
    if kind not in ("independence", "dependence"):
        raise ValueError(f"unknown bias scenario {kind!r}")
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    x1 = rng.integers(0, 2, size=n)
    x6 = rng.random(n)
    if kind == "independence":
        x2 = rng.choice(3, size=n, p=[1 / 6, 1 / 3, 1 / 2])
        x3 = rng.integers(0, 6, size=n)
        x4 = rng.standard_normal(n) ** 2
        x5 = rng.standard_normal(n)
    else:
        cell = rng.choice(18, size=n, p=DEPENDENT_X2_X3.ravel())
        x2, x3 = cell // 6, cell % 6
        z1 = rng.standard_normal(n)
        z2 = rng.standard_normal(n)
        x4 = z1
        x5 = 0.7 * z1 + math.sqrt(1 - 0.49) * z2
    return _dataset({"X4": x4, "X5": x5, "X6": x6},
                    {"X1": (x1, 2), "X2": (x2, 3), "X3": (x3, 6)},
                    y, ("1", "2"), ["X1", "X2", "X3", "X4", "X5", "X6"])


def generate(name: str, n: int | None = None, seed: int = 1) -> Dataset:
    name = name.replace("-", "_")
    if name == "chessboard":
        return gen_chessboard(n or 1000, seed)
    if name == "circle_lines":
        return gen_circle_lines(n or 300, seed)
    if name.startswith("bias_"):
        return gen_bias_scenario(name[5:], n or 500, seed)
    raise ValueError(f"unknown generator {name!r}; expected one of {GENERATORS}")


# ---------------------------------------------------------------------------
# selection bias
# ---------------------------------------------------------------------------

@dataclass
class BiasReport:
    """Root split variable counts over null-model trials.

    ``probabilities`` add univariate counts to half the linear counts (a
    linear split involves two variables) and divide by the number of trials.
    ``se`` is ``sqrt(p (1 - p) / trials)`` per variable.
    """

    kind: str
    trials: int
    names: tuple
    univariate: np.ndarray
    linear: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        total = self.univariate + self.linear / 2.0
        return total / total.sum()

    @property
    def se(self) -> np.ndarray:
        p = self.probabilities
        return np.sqrt(p * (1 - p) / self.trials)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "trials": self.trials, "variables": list(self.names),
                "univariate_counts": self.univariate.tolist(), "linear_counts": self.linear.tolist(),
                "probabilities": self.probabilities.tolist(), "se": self.se.tolist()}

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["variable", "univariate", "linear", "probability", "se"])
        for row in zip(self.names, self.univariate, self.linear, self.probabilities, self.se):
            w.writerow([row[0], int(row[1]), int(row[2]), f"{row[3]:.6f}", f"{row[4]:.6f}"])
        return out.getvalue()


def root_split(dataset: Dataset, m0: int = 5, linear: bool = True, interactions: bool = True):
    """Split chosen at the root with estimated priors and unit costs."""
    pri = resolve_priors(dataset, None)
    ctx = SplitContext(weights=class_weights(dataset.class_counts, pri.values),
                       n_total=dataset.n_rows, m0=m0, interactions=interactions, linear=linear)
    return choose_split(NodeView(dataset, np.arange(dataset.n_rows)), ctx)[0]


def _bias_trial(kind, n, seed, t):
    ds = gen_bias_scenario(kind, n, seed=[seed, t])
    s = root_split(ds)
    return None if s is None else (s.kind, s.variables)


def run_bias_simulation(kind: str, trials: int = 2000, seed: int = 1, n: int = 500,
                        n_jobs=None) -> BiasReport:
    """Count which variable splits the root across ``trials`` null datasets."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    outcomes = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_bias_trial)(kind, n, seed, t) for t in range(trials))
    uni = np.zeros(6, dtype=np.int64)
    lin = np.zeros(6, dtype=np.int64)
    for o in outcomes:
        if o is None:
            continue
        k, vars_ = o
        if k == "linear":
            lin[list(vars_)] += 1
        else:
            uni[vars_[0]] += 1
    return BiasReport(kind, trials, ("X1", "X2", "X3", "X4", "X5", "X6"), uni, lin)


# ---------------------------------------------------------------------------
# cross-validated evaluation
# ---------------------------------------------------------------------------

def fit_model(dataset: Dataset, method: str = "S", config: GrowConfig | None = None,
              priors: Priors | None = None, costs=None, n_estimators: int | None = None,
              seed: int | None = None, n_jobs=None):
    """Fit a pruned tree (S, K, N) or an ensemble (BG, GF)."""
    cfg = config or GrowConfig()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if method == "BG":
        return fit_bagged(dataset, cfg, n_estimators or 100, cfg.seed, priors, costs, n_jobs)
    if method == "GF":
        return fit_forest(dataset, cfg, n_estimators or 500, cfg.seed, priors, costs, n_jobs)
    cfg = replace(cfg, method=method, linear=None)
    return build_tree(dataset, cfg, priors, costs, n_jobs=n_jobs)


def crossval_error(dataset: Dataset, method: str = "S", folds: int = 10, seed: int = 1,
                   config: GrowConfig | None = None, priors: Priors | None = None, costs=None,
                   n_estimators: int | None = None, fitter=None, n_jobs=None) -> dict:
    """V-fold CV estimate of misclassification cost; the average of the per-fold estimates.

    ``fitter(train_dataset) -> model`` replaces the built-in methods when given;
    the model must offer ``predict_codes(columns, n_rows)``.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    costs = check_costs(costs, dataset.n_classes)
    fold_id = stratified_folds(dataset.y, folds, seed)
    per_fold, leaves = [], []
    for f in range(folds):
        train = np.flatnonzero(fold_id != f)
        test = np.flatnonzero(fold_id == f)
        if test.size == 0:
            continue
        tr = dataset.subset(train)
        if np.any(tr.class_counts == 0) and priors is None:
            raise DatasetError(f"fold {f} has a class missing from its training part")
        if fitter is not None:
            model = fitter(tr)
        else:
            model = fit_model(tr, method, config, priors, costs, n_estimators,
                              seed=int(np.random.default_rng([seed, f]).integers(2**31)),
                              n_jobs=n_jobs)
        pred = model.predict_codes([c[test] for c in dataset.columns], test.size)
        per_fold.append(float(costs[pred, dataset.y[test]].mean()))
        if hasattr(model, "n_leaves"):
            leaves.append(float(model.n_leaves))
    return {"error": float(np.mean(per_fold)), "per_fold": per_fold,
            "mean_leaves": float(np.mean(leaves)) if leaves else None, "folds": folds, "seed": seed}


def relative_metrics(values, methods=None, datasets=None) -> dict:
    """Divide each row (dataset) by its minimum and average the ratios per method (column).

    A row whose minimum is 0 gives ratio 1 to every method at 0 and NaN to the
    rest; such rows are flagged and the per-method means skip the NaNs.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2 or v.shape[1] < 2 or v.shape[0] < 1:
        raise ValueError("need a datasets x methods table with at least two methods")
    if np.isnan(v).any():
        raise ValueError("every cell must be populated")
    mins = v.min(axis=1, keepdims=True)
    flagged = (mins[:, 0] == 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = v / mins
    for r in np.flatnonzero(flagged):
        ratios[r] = np.where(v[r] == 0, 1.0, np.nan)
    means = np.array([np.nanmean(c) if np.any(~np.isnan(c)) else np.nan for c in ratios.T])
    return {"methods": list(methods) if methods is not None else list(range(v.shape[1])),
            "datasets": list(datasets) if datasets is not None else list(range(v.shape[0])),
            "ratios": ratios, "mean_ratio": means, "flagged_rows": np.flatnonzero(flagged).tolist()}


def report_json(obj) -> str:
    def conv(x):
        if isinstance(x, np.ndarray):
            return [conv(v) for v in x.tolist()]
        if isinstance(x, float) and not math.isfinite(x):
            return None
        if isinstance(x, (list, tuple)):
            return [conv(v) for v in x]
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        return x
    return json.dumps(conv(obj), sort_keys=True, indent=1) + "\n"
