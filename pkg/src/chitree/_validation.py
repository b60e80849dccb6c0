"""Turn array-like or DataFrame inputs into typed columns."""

from __future__ import annotations

import numbers

import numpy as np

from .dataset import MISSING, UNSEEN, Dataset, DatasetError


def _is_frame(X) -> bool:
    return hasattr(X, "columns") and hasattr(X, "dtypes") and hasattr(X, "iloc")


def _is_missing(v) -> bool:
    if v is None:
        return True
    if isinstance(v, float) and v != v:
        return True
    try:
        return bool(v != v)
    except (TypeError, ValueError):
        return False


def _categorical_selector(categorical_features, names):
    if categorical_features is None:
        return set()
    out = set()
    for c in categorical_features:
        if isinstance(c, (numbers.Integral, np.integer)):
            if not 0 <= c < len(names):
                raise ValueError(f"categorical feature index {c} out of range")
            out.add(int(c))
        elif str(c) in names:
            out.add(names.index(str(c)))
        else:
            raise ValueError(f"unknown categorical feature {c!r}")
    return out


def raw_columns(X, categorical_features=None):
    """Split ``X`` into named raw columns and a per-column kind ('n' or 'c').

    DataFrame columns with object, string, category or bool dtype are
    categorical; any column listed in ``categorical_features`` (by index or
    name) is categorical too.
    """
    if _is_frame(X):
        names = [str(c) for c in X.columns]
        cols = [X.iloc[:, k].to_numpy(dtype=object) if _frame_col_is_cat(X.dtypes.iloc[k])
                else X.iloc[:, k].to_numpy() for k in range(X.shape[1])]
        auto = {k for k in range(len(names)) if _frame_col_is_cat(X.dtypes.iloc[k])}
    else:
        arr = np.asarray(X) if not isinstance(X, list) else np.array(X, dtype=object)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-d array, got shape {arr.shape}")
        names = [f"X{k + 1}" for k in range(arr.shape[1])]
        cols = [arr[:, k] for k in range(arr.shape[1])]
        auto = set() if arr.dtype.kind in "biuf" else {
            k for k in range(arr.shape[1]) if not _numeric_like(cols[k])}
    if not cols:
        raise ValueError("X has no columns")
    if len(cols[0]) == 0:
        raise ValueError("X has no rows")
    cat = auto | _categorical_selector(categorical_features, names)
    kinds = ["c" if k in cat else "n" for k in range(len(names))]
    return names, kinds, cols


def _frame_col_is_cat(dtype) -> bool:
    return getattr(dtype, "kind", "O") in "OSUb" or str(dtype) in ("category", "string", "boolean")


def _numeric_like(col) -> bool:
    for v in col:
        if _is_missing(v):
            continue
        if isinstance(v, (bool, np.bool_)) or not isinstance(v, (numbers.Real, np.number)):
            return False
    return True


def numeric_column(col, name) -> np.ndarray:
    try:
        return np.array([np.nan if _is_missing(v) else float(v) for v in col], dtype=float)
    except (TypeError, ValueError):
        raise DatasetError(f"column {name!r} holds non-numeric values") from None


def categorical_labels(col) -> list:
    return [None if _is_missing(v) else str(v) for v in col]


def build_dataset(X, y, categorical_features=None) -> tuple[Dataset, np.ndarray]:
    """Dataset from ``X`` and ``y`` plus the sorted array of original class labels."""
    names, kinds, raw = raw_columns(X, categorical_features)
    y = np.asarray(y)
    if y.ndim != 1:
        y = y.ravel() if y.ndim == 2 and y.shape[1] == 1 else None
        if y is None:
            raise ValueError("y must be 1-d")
    if y.size != len(raw[0]):
        raise ValueError(f"X has {len(raw[0])} rows but y has {y.size}")
    if any(_is_missing(v) for v in y.tolist()):
        raise ValueError("y contains missing values")
    classes, codes = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise ValueError("need at least two classes in y")
    cols, levels = [], []
    for name, kind, col in zip(names, kinds, raw):
        if kind == "n":
            cols.append(numeric_column(col, name))
            levels.append(None)
        else:
            lookup: dict = {}
            labs = categorical_labels(col)
            codes_k = np.array([MISSING if l is None else lookup.setdefault(l, len(lookup))
                                for l in labs], dtype=np.intp)
            cols.append(codes_k)
            levels.append(tuple(lookup))
    ds = Dataset(tuple(names), tuple(kinds), tuple(cols), tuple(levels), codes,
                 tuple(str(c) for c in classes), "class")
    return ds, classes


def encode_columns(X, names, kinds, levels, categorical_features=None) -> tuple[list, int]:
    """Encode ``X`` against a fitted model's column dictionaries."""
    got_names, _, raw = raw_columns(X, categorical_features)
    if len(raw) != len(names):
        raise ValueError(f"X has {len(raw)} features, model expects {len(names)}")
    if _is_frame(X) and list(got_names) != list(names):
        raise ValueError("DataFrame columns differ from those seen during fit")
    cols = []
    for name, kind, lev, col in zip(names, kinds, levels, raw):
        if kind == "n":
            cols.append(numeric_column(col, name))
        else:
            lookup = {l: i for i, l in enumerate(lev)}
            cols.append(np.array([MISSING if l is None else lookup.get(l, UNSEEN)
                                  for l in categorical_labels(col)], dtype=np.intp))
    return cols, len(raw[0])
