"""Column-typed datasets, priors, misclassification costs and node statistics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MISSING_TOKENS = ("", "na", "?")

# Categorical code for a value absent from the level dictionary (prediction time only).
UNSEEN = -2
MISSING = -1

ROLES = {"d": "class", "n": "numeric", "c": "categorical", "x": "excluded"}


class DatasetError(ValueError):
    """Raised for malformed schemas, CSV files, priors or cost matrices."""


@dataclass(frozen=True)
class Schema:
    names: tuple[str, ...]
    roles: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) != len(self.roles):
            raise DatasetError("schema names and roles differ in length")
        if len(set(self.names)) != len(self.names):
            raise DatasetError("duplicate column names in schema")
        bad = [r for r in self.roles if r not in ROLES]
        if bad:
            raise DatasetError(f"unknown schema role(s): {bad}")
        if self.roles.count("d") != 1:
            raise DatasetError("schema must declare exactly one class column (role d)")
        if not any(r in ("n", "c") for r in self.roles):
            raise DatasetError("schema has zero usable predictors")

    @classmethod
    def parse(cls, text: str) -> "Schema":
        """Parse ``name role`` lines; blank lines and ``#`` comments are skipped."""
        names, roles = [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DatasetError(f"schema line {lineno}: expected 'name role', got {raw!r}")
            names.append(parts[0])
            roles.append(parts[1].lower())
        return cls(tuple(names), tuple(roles))

    @classmethod
    def read(cls, path) -> "Schema":
        return cls.parse(Path(path).read_text())

    def dumps(self) -> str:
        return "".join(f"{n} {r}\n" for n, r in zip(self.names, self.roles))

    @property
    def class_column(self) -> str:
        return self.names[self.roles.index("d")]

    @property
    def predictors(self) -> list[tuple[str, str]]:
        return [(n, r) for n, r in zip(self.names, self.roles) if r in ("n", "c")]


def _label_sort_key(labels):
    try:
        return sorted(labels, key=float)
    except ValueError:
        return sorted(labels)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of typed predictor columns plus a class column.

    Numeric columns are float arrays with NaN for missing cells. Categorical
    columns are integer codes into ``levels[k]`` with ``MISSING`` (-1) for a
    missing cell. Class labels are stored as codes ``0..J-1`` into ``classes``.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    columns: tuple[np.ndarray, ...]
    levels: tuple[tuple[str, ...] | None, ...]
    y: np.ndarray
    classes: tuple
    class_name: str = "class"
    _counts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.intp)
        object.__setattr__(self, "y", y)
        if y.size == 0:
            raise DatasetError("dataset has no rows")
        if len(self.classes) < 2:
            raise DatasetError("need at least two classes")
        if y.min() < 0 or y.max() >= len(self.classes):
            raise DatasetError("class codes out of range")
        for col, kind, lev in zip(self.columns, self.kinds, self.levels):
            if len(col) != len(y):
                raise DatasetError("column lengths differ")
            if kind == "c" and col.size and col.max(initial=-1) >= len(lev):
                raise DatasetError("level index outside dictionary")
        object.__setattr__(self, "_counts", np.bincount(y, minlength=len(self.classes)))

    @property
    def n_rows(self) -> int:
        return int(self.y.size)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_features(self) -> int:
        return len(self.names)

    @property
    def class_counts(self) -> np.ndarray:
        return self._counts

    def is_categorical(self, k: int) -> bool:
        return self.kinds[k] == "c"

    def subset(self, rows) -> "Dataset":
        """Rows ``rows`` (may repeat, as in a bootstrap sample); dictionaries are kept."""
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.names, self.kinds, tuple(c[rows] for c in self.columns),
                       self.levels, self.y[rows], self.classes, self.class_name)

    def schema(self) -> Schema:
        roles = ["n" if k == "n" else "c" for k in self.kinds]
        return Schema(tuple(self.names) + (self.class_name,), tuple(roles) + ("d",))

    def cell_text(self, k: int, i: int) -> str:
        v = self.columns[k][i]
        if self.kinds[k] == "n":
            return "NA" if np.isnan(v) else repr(float(v))
        return "NA" if v < 0 else self.levels[k][v]

    def to_csv(self, fh=None) -> str | None:
        """Write a header + rows CSV; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(list(self.names) + [self.class_name])
        for i in range(self.n_rows):
            w.writerow([self.cell_text(k, i) for k in range(self.n_features)]
                       + [str(self.classes[self.y[i]])])
        return out.getvalue() if fh is None else None

    def encode(self, header, rows, missing_tokens=MISSING_TOKENS) -> list[np.ndarray]:
        """Encode raw string rows against this dataset's dictionaries (see :func:`encode_rows`)."""
        return encode_rows(self.names, self.kinds, self.levels, header, rows, missing_tokens)


def encode_rows(names, kinds, levels, header, rows, missing_tokens=MISSING_TOKENS) -> list[np.ndarray]:
    """Encode raw string rows against fitted column dictionaries.

    Unknown categorical levels become ``UNSEEN``. Columns not present in
    ``header`` raise ``DatasetError``.
    """
    index = {name: i for i, name in enumerate(header)}
    missing = {t.lower() for t in missing_tokens}
    cols = []
    for k, name in enumerate(names):
        if name not in index:
            raise DatasetError(f"column {name!r} missing from data header")
        j = index[name]
        cells = [r[j].strip() for r in rows]
        if kinds[k] == "n":
            cols.append(_parse_numeric(cells, name, missing))
        else:
            lookup = {lev: c for c, lev in enumerate(levels[k])}
            cols.append(np.array([MISSING if t.lower() in missing else lookup.get(t, UNSEEN)
                                  for t in cells], dtype=np.intp))
    return cols


def _parse_numeric(cells, name, missing) -> np.ndarray:
    out = np.empty(len(cells))
    for i, t in enumerate(cells):
        if t.lower() in missing:
            out[i] = np.nan
            continue
        try:
            out[i] = float(t)
        except ValueError:
            raise DatasetError(f"non-numeric token {t!r} in numeric column {name!r}") from None
    return out


def read_csv_rows(source) -> tuple[list[str], list[list[str]]]:
    if isinstance(source, (str, Path)) and Path(source).exists():
        text = Path(source).read_text()
    elif hasattr(source, "read"):
        text = source.read()
    else:
        text = str(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DatasetError("CSV is empty") from None
    rows = [r for r in reader if r]
    for r in rows:
        if len(r) != len(header):
            raise DatasetError(f"row has {len(r)} cells, header has {len(header)}")
    return header, rows


def load_dataset(csv_source, schema: Schema, missing_tokens=MISSING_TOKENS) -> Dataset:
    """Load a CSV (path, file object or text) according to ``schema``."""
    header, rows = read_csv_rows(csv_source)
    index = {h: i for i, h in enumerate(header)}
    for name in schema.names:
        if name not in index:
            raise DatasetError(f"unknown column {name!r}: not in CSV header")
    missing = {t.lower() for t in missing_tokens}

    cname = schema.class_column
    raw_y = [r[index[cname]].strip() for r in rows]
    if any(t.lower() in missing for t in raw_y):
        raise DatasetError("missing class value")
    classes = tuple(_label_sort_key(set(raw_y)))
    cindex = {c: i for i, c in enumerate(classes)}
    y = np.array([cindex[t] for t in raw_y], dtype=np.intp)

    names, kinds, columns, levels = [], [], [], []
    for name, role in schema.predictors:
        cells = [r[index[name]].strip() for r in rows]
        names.append(name)
        kinds.append(role)
        if role == "n":
            columns.append(_parse_numeric(cells, name, missing))
            levels.append(None)
        else:
            lookup: dict[str, int] = {}
            codes = np.empty(len(cells), dtype=np.intp)
            for i, t in enumerate(cells):
                if t.lower() in missing:
                    codes[i] = MISSING
                else:
                    codes[i] = lookup.setdefault(t, len(lookup))
            columns.append(codes)
            levels.append(tuple(lookup))
    return Dataset(tuple(names), tuple(kinds), tuple(columns), tuple(levels), y, classes, cname)


@dataclass(frozen=True)
class Priors:
    values: np.ndarray
    estimated: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or np.any(v < 0) or not math.isclose(v.sum(), 1.0, abs_tol=1e-9):
            raise DatasetError("priors must be nonnegative and sum to 1")
        object.__setattr__(self, "values", v / v.sum())


def default_priors(dataset: Dataset) -> Priors:
    counts = dataset.class_counts
    if np.any(counts == 0):
        absent = [dataset.classes[j] for j in np.flatnonzero(counts == 0)]
        raise DatasetError(f"classes absent from training data: {absent}")
    return Priors(counts / counts.sum(), estimated=True)


def unit_costs(n_classes: int) -> np.ndarray:
    return 1.0 - np.eye(n_classes)


def check_costs(costs, n_classes: int) -> np.ndarray:
    """Validate a cost matrix with ``costs[i, j]`` = cost of predicting i when truth is j."""
    if costs is None:
        return unit_costs(n_classes)
    c = np.asarray(costs, dtype=float)
    if c.shape != (n_classes, n_classes):
        raise DatasetError(f"cost matrix must be {n_classes}x{n_classes}")
    if np.any(c < 0) or np.any(np.diag(c) != 0):
        raise DatasetError("costs must be nonnegative with zero diagonal")
    return c


def read_priors(path, classes) -> Priors:
    """Priors file: JSON object mapping class label to prior probability."""
    data = json.loads(Path(path).read_text())
    try:
        vals = [float(data[str(c)]) for c in classes]
    except KeyError as e:
        raise DatasetError(f"priors file lacks class {e.args[0]!r}") from None
    return Priors(np.array(vals), estimated=False)


def read_costs(path, classes) -> np.ndarray:
    """Cost file: ``{"labels": [...], "matrix": [[C(i|j) for j] for i]}``."""
    data = json.loads(Path(path).read_text())
    labels = [str(x) for x in data.get("labels", classes)]
    m = np.asarray(data["matrix"], dtype=float)
    pos = {c: i for i, c in enumerate(labels)}
    try:
        order = [pos[str(c)] for c in classes]
    except KeyError as e:
        raise DatasetError(f"cost file lacks class {e.args[0]!r}") from None
    return check_costs(m[np.ix_(order, order)], len(classes))


@dataclass(frozen=True)
class NodeClassStats:
    """Class composition of a node, weighted by priors over root class counts."""

    counts: np.ndarray
    root_counts: np.ndarray
    priors: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def p_joint(self) -> np.ndarray:
        """p(j, t) = pi(j) N_j(t) / N_j."""
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(self.root_counts > 0, self.priors / self.root_counts, 0.0)
        return w * self.counts

    @property
    def p_node(self) -> float:
        return float(self.p_joint.sum())

    @property
    def p_class(self) -> np.ndarray:
        pj = self.p_joint
        return pj / pj.sum()

    @property
    def n_present(self) -> int:
        return int(np.count_nonzero(self.counts))


def class_weights(root_counts, priors) -> np.ndarray:
    """Per-observation weight pi(j)/N_j of each class."""
    root_counts = np.asarray(root_counts, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(root_counts > 0, np.asarray(priors, dtype=float) / root_counts, 0.0)


def node_stats(dataset: Dataset, membership, priors: Priors | None = None) -> NodeClassStats:
    rows = np.asarray(membership)
    if rows.dtype == bool:
        rows = np.flatnonzero(rows)
    if rows.size == 0:
        raise DatasetError("empty node membership")
    priors = priors or default_priors(dataset)
    counts = np.bincount(dataset.y[rows], minlength=dataset.n_classes)
    return NodeClassStats(counts, dataset.class_counts, priors.values)


def assign_class(probs, costs=None) -> int:
    """Index of the class minimizing expected misclassification cost.

    ``probs`` may be a NodeClassStats or any nonnegative vector proportional
    to p(j|t). Ties go to the smallest index.
    """
    if isinstance(probs, NodeClassStats):
        probs = probs.p_joint
    p = np.asarray(probs, dtype=float)
    c = unit_costs(p.size) if costs is None else np.asarray(costs)
    risk = c @ p
    return int(np.flatnonzero(risk <= risk.min() * (1 + 1e-12) + 1e-300)[0])
