"""Contingency chi-squared tests reduced to one degree of freedom.

All statistics here take raw node arrays: a predictor column restricted to
the node's rows and the matching class codes. Categorical columns hold
integer codes with ``MISSING`` (-1) for a missing cell; numeric columns hold
floats with NaN for missing.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import stats as _sps

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class DiscriminantDirection:
    coef: np.ndarray
    offset: float = 0.0


def pearson_chi2(table) -> tuple[float, int]:
    """Pearson statistic and degrees of freedom after deleting empty rows/columns."""
    t = np.asarray(table, dtype=float)
    t = t[t.sum(axis=1) > 0]
    if t.size:
        t = t[:, t.sum(axis=0) > 0]
    r, c = t.shape if t.ndim == 2 else (0, 0)
    if r <= 1 or c <= 1:
        return 0.0, 0
    rs = t.sum(axis=1, keepdims=True)
    cs = t.sum(axis=0, keepdims=True)
    e = rs * cs / t.sum()
    return float(((t - e) ** 2 / e).sum()), (r - 1) * (c - 1)


def wilson_hilferty(chi2: float, nu: int) -> float:
    """Convert a chi-squared value on ``nu`` d.f. to an equivalent 1-d.f. value."""
    if nu <= 1:
        return float(chi2) if nu == 1 else 0.0
    x = 7.0 / 9.0 + np.sqrt(nu) * ((chi2 / nu) ** (1.0 / 3.0) - 1.0 + 2.0 / (9.0 * nu))
    return float(max(0.0, x) ** 3)


@lru_cache(maxsize=4096)
def chi2_upper(alpha: float) -> float:
    """Upper-``alpha`` quantile of chi-squared with one degree of freedom."""
    if alpha <= 0:
        return np.inf
    return float(_sps.chi2.isf(alpha, 1))


def _table_stat(bins, y, n_bins, n_classes) -> float:
    counts = np.bincount(bins * n_classes + y, minlength=n_bins * n_classes)
    return wilson_hilferty(*pearson_chi2(counts.reshape(n_bins, n_classes).T))


def discretize_main(values, n_node: int, n_classes_present: int) -> tuple[np.ndarray, int]:
    """Bin non-missing numeric values into 4 (or 3, for small nodes) intervals.

    Returns ``(bin_index, n_bins)``. A value equal to a boundary goes to the
    lower bin. A zero standard deviation puts everything in one bin.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return np.zeros(v.size, dtype=np.intp), 1
    m = v.mean()
    s = v.std(ddof=1)
    if not s > 0:
        return np.zeros(v.size, dtype=np.intp), 1
    if n_node >= 20 * n_classes_present:
        h = s * SQRT3 / 2
        cuts = np.array([m - h, m, m + h])
    else:
        h = s * SQRT3 / 3
        cuts = np.array([m - h, m + h])
    return np.searchsorted(cuts, v, side="left"), cuts.size + 1


def _n_present(y, n_classes):
    return int(np.count_nonzero(np.bincount(y, minlength=n_classes)))


def categorical_codes(codes) -> np.ndarray:
    """Shift codes so a missing cell is its own level (index 0)."""
    return np.asarray(codes, dtype=np.intp) + 1


def main_effect_stat(x, y, n_classes: int, categorical: bool) -> float:
    """One-d.f. main-effect statistic W_M of ``x`` for class codes ``y``."""
    y = np.asarray(y, dtype=np.intp)
    if categorical:
        c = categorical_codes(x)
        return _table_stat(c, y, int(c.max()) + 1, n_classes)
    x = np.asarray(x, dtype=float)
    miss = np.isnan(x)
    bins, nb = discretize_main(x[~miss], y.size, _n_present(y, n_classes))
    if miss.any():
        full = np.full(y.size, nb, dtype=np.intp)
        full[~miss] = bins
        return _table_stat(full, y, nb + 1, n_classes)
    return _table_stat(bins, y, nb, n_classes)


def interaction_codes(x, n_node: int, n_classes_present: int, categorical: bool):
    """Per-row interaction cell index of one variable (-1 where excluded) and the cell count."""
    if categorical:
        c = categorical_codes(x)
        return c, int(c.max()) + 1
    x = np.asarray(x, dtype=float)
    ok = ~np.isnan(x)
    out = np.full(x.size, -1, dtype=np.intp)
    v = x[ok]
    if v.size < 2:
        out[ok] = 0
        return out, 1
    m = v.mean()
    if n_node < 45 * n_classes_present:
        cuts = np.array([m])
    else:
        h = v.std(ddof=1) * SQRT3 / 3
        cuts = np.array([m - h, m + h])
    out[ok] = np.searchsorted(cuts, v, side="left")
    return out, cuts.size + 1


def interaction_from_codes(c1, n1, c2, n2, y, n_classes) -> float:
    ok = (c1 >= 0) & (c2 >= 0)
    if not ok.all():
        c1, c2, y = c1[ok], c2[ok], y[ok]
    if y.size == 0:
        return 0.0
    return _table_stat(c1 * n2 + c2, y, n1 * n2, n_classes)


def interaction_stat(x1, cat1: bool, x2, cat2: bool, y, n_classes: int) -> float:
    """One-d.f. interaction statistic W_I over the Cartesian product of the two discretizations.

    Rows with a missing numeric value are excluded; a missing categorical
    value counts as its own level.
    """
    y = np.asarray(y, dtype=np.intp)
    jt = _n_present(y, n_classes)
    c1, n1 = interaction_codes(x1, y.size, jt, cat1)
    c2, n2 = interaction_codes(x2, y.size, jt, cat2)
    return interaction_from_codes(c1, n1, c2, n2, y, n_classes)


def _sym_inv_sqrt(w, rel_tol=1e-10):
    vals, vecs = np.linalg.eigh(w)
    top = vals.max(initial=0.0)
    keep = vals > rel_tol * top if top > 0 else np.zeros_like(vals, dtype=bool)
    return (vecs[:, keep] / np.sqrt(vals[keep])) @ vecs[:, keep].T


def leading_discriminant(within, between) -> np.ndarray:
    """Leading eigenvector of the generalized problem ``between v = lam within v``.

    A singular within-class scatter is handled with a spectral pseudo-inverse
    (eigenvalues below 1e-10 of the largest are dropped). The result has unit
    length and its first non-zero coefficient is positive.
    """
    root = _sym_inv_sqrt(within)
    if not np.any(root):
        v = np.linalg.eigh(between)[1][:, -1]
    else:
        m = root @ between @ root
        m = (m + m.T) / 2
        v = root @ np.linalg.eigh(m)[1][:, -1]
        if not np.any(np.abs(v) > 0):
            v = np.linalg.eigh(between)[1][:, -1]
    v = v / np.linalg.norm(v)
    nz = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v


def scatter_matrices(points, labels):
    """Within- and between-class scatter of ``points`` (n x p) grouped by ``labels``."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    grand = points.mean(axis=0)
    p = points.shape[1]
    within = np.zeros((p, p))
    between = np.zeros((p, p))
    for j in np.unique(labels):
        pts = points[labels == j]
        mj = pts.mean(axis=0)
        d = pts - mj
        within += d.T @ d
        g = (mj - grand)[:, None]
        between += len(pts) * (g @ g.T)
    return within, between


def lda_direction(points, labels) -> DiscriminantDirection:
    """Leading linear discriminant coordinate of ``points`` for class ``labels``."""
    if np.unique(labels).size < 2:
        raise ValueError("need at least two classes for a discriminant direction")
    return DiscriminantDirection(leading_discriminant(*scatter_matrices(points, labels)))


def trim_flags(x, y) -> np.ndarray:
    """Rows within two class standard deviations of their class mean on ``x``.

    Rows of classes with fewer than two members are never kept.
    """
    keep = np.zeros(y.size, dtype=bool)
    for j in np.unique(y):
        idx = np.flatnonzero(y == j)
        if idx.size < 2:
            continue
        a = x[idx]
        keep[idx] = np.abs(a - a.mean()) <= 2 * a.std(ddof=1)
    return keep


def trimmed_direction(x1, x2, y, flags=None) -> DiscriminantDirection | None:
    """Discriminant direction fitted after per-class 2-SD rectangle trimming.

    Inputs must be free of missing values. Classes left with fewer than two
    points are dropped from the fit; ``None`` means fewer than two classes
    remain. ``flags`` may carry precomputed :func:`trim_flags` of both inputs.
    """
    f1, f2 = flags if flags is not None else (trim_flags(x1, y), trim_flags(x2, y))
    keep = f1 & f2
    counts = np.bincount(y[keep], minlength=int(y.max()) + 1 if y.size else 0)
    small = np.flatnonzero((counts > 0) & (counts < 2))
    if small.size:
        keep &= ~np.isin(y, small)
    if np.count_nonzero(counts >= 2) < 2:
        return None
    pts = np.column_stack([x1[keep], x2[keep]])
    return lda_direction(pts, y[keep])


def linear_stat(x1, x2, y, n_classes: int, flags=None) -> tuple[float, DiscriminantDirection | None]:
    """Discriminant statistic W_L for two numeric variables and its direction.

    ``flags`` (precomputed :func:`trim_flags` of both columns) is only valid
    when neither column has missing values.
    """
    y = np.asarray(y, dtype=np.intp)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if flags is not None:
        a, b, yy = x1, x2, y
    else:
        ok = ~(np.isnan(x1) | np.isnan(x2))
        a, b, yy = x1[ok], x2[ok], y[ok]
    if yy.size < 2:
        return 0.0, None
    direction = trimmed_direction(a, b, yy, flags)
    if direction is None:
        return 0.0, None
    z = direction.coef[0] * a + direction.coef[1] * b
    bins, nb = discretize_main(z, y.size, _n_present(y, n_classes))
    return _table_stat(bins, yy, nb, n_classes), direction
