"""CSV ingestion, preprocessing and the train/test/fold split protocol.

Preprocessing statistics (imputation means, min-max ranges) are always fit
on training rows only and then applied everywhere, with out-of-range values
clamped into [0, 1].
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from recourse.core import ConfigError, DataError


@dataclass(frozen=True)
class Table:
    """Parsed CSV: feature cells are floats or None (missing)."""

    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    @property
    def n_rows(self):
        return len(self.rows)

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise DataError(f"unknown column {name!r}") from None

    def subset(self, indices) -> "Table":
        return Table(self.columns, tuple(self.rows[i] for i in indices))


def load_csv(path, id_column: str | None = None, label_column: str | None = None) -> Table:
    """Parse an RFC-4180 style CSV with a header row.

    Numeric cells become floats, empty cells become None (missing), and the
    id column keeps its text.  Malformed rows raise DataError naming the
    offending file line.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read dataset: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header row") from None
        columns = tuple(h.strip() for h in header)
        for hint in (id_column, label_column):
            if hint is not None and hint not in columns:
                raise DataError(f"{path}: declared column {hint!r} not in header")
        rows = []
        for line_no, raw in enumerate(reader, start=2):
            if len(raw) != len(columns):
                raise DataError(
                    f"{path} line {line_no}: expected {len(columns)} cells, got {len(raw)}"
                )
            row = []
            for name, cell in zip(columns, raw):
                cell = cell.strip()
                if name == id_column:
                    row.append(cell)
                elif cell == "":
                    row.append(None)
                else:
                    try:
                        row.append(float(cell))
                    except ValueError:
                        raise DataError(
                            f"{path} line {line_no}: non-numeric value {cell!r} "
                            f"in column {name!r}"
                        ) from None
            rows.append(tuple(row))
    return Table(columns, tuple(rows))


@dataclass(frozen=True)
class DatasetSchema:
    """Column roles plus the training statistics preprocessing needs."""

    feature_columns: tuple[str, ...]
    label_column: str
    id_column: str | None
    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    means: tuple[float, ...]
    positive_label: float = 1.0

    def __post_init__(self):
        for lo, hi, name in zip(self.mins, self.maxs, self.feature_columns):
            if lo > hi:
                raise ValueError(f"column {name!r} has min > max")

    @property
    def n_features(self):
        return len(self.feature_columns)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_columns.index(name)
        except ValueError:
            raise ConfigError(f"unknown feature column {name!r}") from None

    def to_json(self) -> dict:
        return {
            "feature_columns": list(self.feature_columns),
            "label_column": self.label_column,
            "id_column": self.id_column,
            "mins": list(self.mins),
            "maxs": list(self.maxs),
            "means": list(self.means),
            "positive_label": self.positive_label,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetSchema":
        return cls(
            feature_columns=tuple(doc["feature_columns"]),
            label_column=doc["label_column"],
            id_column=doc.get("id_column"),
            mins=tuple(doc["mins"]),
            maxs=tuple(doc["maxs"]),
            means=tuple(doc["means"]),
            positive_label=float(doc.get("positive_label", 1.0)),
        )


def fit_preprocess(
    train: Table,
    label_column: str,
    id_column: str | None = None,
    positive_label: float = 1.0,
) -> DatasetSchema:
    """Compute imputation means and min-max ranges from training rows only."""
    feature_cols = tuple(
        c for c in train.columns if c != label_column and c != id_column
    )
    if label_column not in train.columns:
        raise DataError(f"label column {label_column!r} not in table")
    mins, maxs, means = [], [], []
    for name in feature_cols:
        j = train.column_index(name)
        vals = [r[j] for r in train.rows if r[j] is not None]
        if not vals:
            raise DataError(f"column {name!r} has no observed values to fit on")
        lo, hi = min(vals), max(vals)
        if lo == hi:
            warnings.warn(
                f"column {name!r} is constant on the training rows; it will map to 0"
            )
        mins.append(float(lo))
        maxs.append(float(hi))
        means.append(float(sum(vals) / len(vals)))
    return DatasetSchema(
        feature_cols, label_column, id_column,
        tuple(mins), tuple(maxs), tuple(means), float(positive_label),
    )


def apply_preprocess(table: Table, schema: DatasetSchema):
    """Impute missing values with training means, min-max scale with training
    ranges, clamp into [0, 1].  Returns (X, y, ids) with labels in {-1, +1}.
    """
    n = table.n_rows
    X = np.empty((n, schema.n_features))
    col_idx = [table.column_index(c) for c in schema.feature_columns]
    for k, (j, lo, hi, mean) in enumerate(
        zip(col_idx, schema.mins, schema.maxs, schema.means)
    ):
        col = np.array(
            [r[j] if r[j] is not None else mean for r in table.rows], dtype=float
        )
        if hi > lo:
            X[:, k] = np.clip((col - lo) / (hi - lo), 0.0, 1.0)
        else:
            X[:, k] = 0.0
    yj = table.column_index(schema.label_column)
    raw = [r[yj] for r in table.rows]
    if any(v is None for v in raw):
        raise DataError("label column has missing values")
    distinct = sorted(set(raw))
    if len(distinct) > 2:
        raise DataError(f"label column has {len(distinct)} distinct values, expected 2")
    y = np.array([1.0 if v == schema.positive_label else -1.0 for v in raw])
    ids = None
    if schema.id_column is not None:
        ij = table.column_index(schema.id_column)
        ids = [r[ij] for r in table.rows]
    return X, y, ids


@dataclass(frozen=True)
class SplitPlan:
    """Half/half train-test partition with the test half cut into folds."""

    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    test_folds: tuple[int, ...]    # fold id per entry of test_indices

    @property
    def n_folds(self):
        return max(self.test_folds) + 1

    def fold_members(self, fold: int):
        return [i for i, f in zip(self.test_indices, self.test_folds) if f == fold]


def make_split(n: int, seed: int, n_folds: int = 10) -> SplitPlan:
    """Seeded equal-parts split; an odd row goes to the training half.

    The test half is dealt round-robin into folds, so fold sizes differ by
    at most one.
    """
    if n < 20:
        raise ConfigError(f"need at least 20 rows to split, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = (n + 1) // 2
    train = np.sort(perm[:n_train])
    test_shuffled = perm[n_train:]
    fold_of = {int(idx): pos % n_folds for pos, idx in enumerate(test_shuffled)}
    test = np.sort(test_shuffled)
    return SplitPlan(
        tuple(int(i) for i in train),
        tuple(int(i) for i in test),
        tuple(fold_of[int(i)] for i in test),
    )


def synthetic_two_gaussians(n: int, seed: int = 0, noise: float = 0.12):
    """A small benchmark population with a known beneficial direction.

    Two direct features separate the classes (high values mean the positive,
    undesired class), one indirect feature tracks their mean, and one
    unchangeable feature is pure noise.  Returns (columns, rows) ready for
    write_csv; the id column is first and the label last.
    """
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    centers = np.where(y[:, None] > 0, 0.7, 0.3)
    direct = np.clip(centers + rng.normal(0.0, noise, (n, 2)), 0.0, 1.0)
    indirect = np.clip(
        direct.mean(axis=1) + rng.normal(0.0, noise / 2, n), 0.0, 1.0
    )
    unchangeable = rng.random(n)
    columns = ["id", "risk_a", "risk_b", "marker", "background", "outcome"]
    rows = [
        (
            str(i + 1),
            float(direct[i, 0]),
            float(direct[i, 1]),
            float(indirect[i]),
            float(unchangeable[i]),
            int(y[i]),
        )
        for i in range(n)
    ]
    return columns, rows


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)
