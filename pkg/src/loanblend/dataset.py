"""CSV ingestion, schema enforcement, missing-row filtering, one-hot
encoding and reproducible stratified train/test splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

MISSING_TOKENS = {"", "na", "nan", "null"}

DEFAULT_LABEL_MAP = {"Charged Off": 0, "Fully Paid": 1}


@dataclass
class ColumnSchema:
    name: str
    kind: str  # numeric | categorical | label
    allowed_categories: list[str] | None = None


@dataclass
class Dataset:
    """Column-typed tabular store with a binary label.

    Numeric columns are float arrays (NaN marks a missing cell),
    categorical columns are string object arrays ("" marks missing) and
    the label is a float array in {0, 1, NaN}.
    """

    schema: list[ColumnSchema]
    columns: dict  # name -> np.ndarray
    label: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.label.size

    def feature_schema(self):
        return [c for c in self.schema if c.kind != "label"]


@dataclass
class EncodedMatrix:
    X: np.ndarray
    feature_names: list[str]
    y: np.ndarray
    numeric_mask: np.ndarray = field(default=None)  # True for raw-numeric columns

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]


@dataclass
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


def validate_schema(schema: list[ColumnSchema]):
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise ValueError("schema column names must be unique")
    labels = [c for c in schema if c.kind == "label"]
    if len(labels) != 1:
        raise ValueError("schema must declare exactly one label column")
    for c in schema:
        if c.kind not in ("numeric", "categorical", "label"):
            raise ValueError(f"unknown column kind {c.kind!r} for {c.name!r}")


def read_schema(path) -> list[ColumnSchema]:
    """Parse a plain-text schema: one `name,kind[,cat1|cat2|...]` per line."""
    schema = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise ValueError(f"bad schema line: {line!r}")
            name, kind = parts[0].strip(), parts[1].strip()
            cats = None
            if len(parts) >= 3 and parts[2].strip():
                cats = [c.strip() for c in parts[2].split("|")]
            schema.append(ColumnSchema(name=name, kind=kind, allowed_categories=cats))
    validate_schema(schema)
    return schema


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_TOKENS


def ingest_csv(path, schema: list[ColumnSchema], label_map=None) -> Dataset:
    """Read an RFC-4180 CSV whose header matches the schema names.

    Numeric cells are parsed as floats, label strings are mapped to
    {0, 1} (default: Charged Off -> 0, Fully Paid -> 1). Missing cells
    survive as NaN/"" until drop_missing.
    """
    validate_schema(schema)
    if label_map is None:
        label_map = DEFAULT_LABEL_MAP
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        expected = [c.name for c in schema]
        if [h.strip() for h in header] != expected:
            raise ValueError(
                f"{path}: header {header!r} does not match schema {expected!r}"
            )
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    n = len(rows)
    columns = {}
    label = np.full(n, np.nan)
    label_name = next(c.name for c in schema if c.kind == "label")
    for j, col in enumerate(schema):
        if col.kind == "numeric":
            out = np.full(n, np.nan)
            for i, row in enumerate(rows):
                if len(row) != len(schema):
                    raise ValueError(f"row {i + 1}: expected {len(schema)} cells")
                cell = row[j]
                if _is_missing(cell):
                    continue
                try:
                    out[i] = float(cell)
                except ValueError:
                    raise ValueError(
                        f"row {i + 1}, column {col.name!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
            columns[col.name] = out
        elif col.kind == "categorical":
            out = np.empty(n, dtype=object)
            for i, row in enumerate(rows):
                cell = row[j]
                out[i] = "" if _is_missing(cell) else cell.strip()
            columns[col.name] = out
        else:
            for i, row in enumerate(rows):
                cell = row[j].strip()
                if _is_missing(cell):
                    continue
                if cell not in label_map:
                    raise ValueError(
                        f"row {i + 1}, column {label_name!r}: "
                        f"unknown label {cell!r}"
                    )
                label[i] = float(label_map[cell])
    return Dataset(schema=schema, columns=columns, label=label)


def drop_missing(d: Dataset) -> Dataset:
    """Remove every row with any missing cell; report the retained fraction."""
    keep = np.ones(d.n_rows, dtype=bool)
    for col in d.schema:
        if col.kind == "numeric":
            keep &= np.isfinite(d.columns[col.name])
        elif col.kind == "categorical":
            keep &= np.asarray([v != "" for v in d.columns[col.name]])
    keep &= np.isfinite(d.label)
    n_kept = int(keep.sum())
    if n_kept == 0:
        raise ValueError("drop_missing removed every row")
    columns = {name: arr[keep] for name, arr in d.columns.items()}
    return Dataset(schema=d.schema, columns=columns, label=d.label[keep])


def retained_fraction(before: Dataset, after: Dataset) -> float:
    return after.n_rows / before.n_rows


class Encoder:
    """One-hot layout fitted on a dataset, reusable on later data.

    Column order is deterministic: schema order, with categories sorted
    lexicographically inside each categorical group.
    """

    def __init__(self, schema: list[ColumnSchema], categories: dict):
        self.schema = schema
        self.categories = categories  # name -> sorted list of category strings
        self.feature_names = []
        self.numeric_mask = []
        for col in schema:
            if col.kind == "numeric":
                self.feature_names.append(col.name)
                self.numeric_mask.append(True)
            elif col.kind == "categorical":
                for cat in categories[col.name]:
                    self.feature_names.append(f"{col.name}={cat}")
                    self.numeric_mask.append(False)
        self.numeric_mask = np.asarray(self.numeric_mask, dtype=bool)

    @classmethod
    def fit(cls, d: Dataset) -> "Encoder":
        categories = {}
        for col in d.schema:
            if col.kind != "categorical":
                continue
            seen = sorted(set(d.columns[col.name]))
            if col.allowed_categories is not None:
                allowed = sorted(col.allowed_categories)
                unknown = [v for v in seen if v not in allowed]
                if unknown:
                    raise ValueError(
                        f"column {col.name!r}: categories {unknown!r} "
                        f"not in allowed list"
                    )
                categories[col.name] = allowed
            else:
                categories[col.name] = seen
        return cls(d.schema, categories)

    def transform(self, d: Dataset, strict: bool = True) -> EncodedMatrix:
        """Encode a dataset into the fitted layout.

        With strict=False (predict-time path) unknown categories map to
        an all-zero indicator group instead of raising.
        """
        n = d.n_rows
        blocks = []
        for col in d.schema:
            if col.kind == "numeric":
                vals = np.asarray(d.columns[col.name], dtype=np.float64)
                if not np.isfinite(vals).all():
                    raise ValueError(f"column {col.name!r}: non-finite value after filtering")
                blocks.append(vals[:, None])
            elif col.kind == "categorical":
                cats = self.categories[col.name]
                index = {c: k for k, c in enumerate(cats)}
                block = np.zeros((n, len(cats)))
                for i, v in enumerate(d.columns[col.name]):
                    k = index.get(v)
                    if k is None:
                        if strict:
                            raise ValueError(
                                f"column {col.name!r}: unseen category {v!r}"
                            )
                        continue  # all-zero group for unknown categories
                    block[i, k] = 1.0
                blocks.append(block)
        X = np.hstack(blocks) if blocks else np.zeros((n, 0))
        return EncodedMatrix(
            X=X,
            feature_names=list(self.feature_names),
            y=d.label.astype(np.int64),
            numeric_mask=self.numeric_mask.copy(),
        )


def encode(d: Dataset) -> EncodedMatrix:
    """Fit-and-transform one-hot encoding of a filtered dataset."""
    return Encoder.fit(d).transform(d, strict=True)


def split(d: EncodedMatrix, test_fraction: float, seed: int) -> Split:
    """Stratified train/test partition, deterministic per seed."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    y = np.asarray(d.y)
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < 2:
            raise ValueError(f"class {cls} has fewer than 2 rows")
        perm = rng.permutation(idx)
        n_test = int(round(test_fraction * idx.size))
        n_test = min(max(n_test, 1), idx.size - 1)
        test_parts.append(perm[:n_test])
        train_parts.append(perm[n_test:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return Split(train_indices=train, test_indices=test, seed=seed)


def save_split(path, s: Split):
    """Persist as a two-section index file (train: / test:)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("train:\n")
        for i in s.train_indices:
            fh.write(f"{int(i)}\n")
        fh.write("test:\n")
        for i in s.test_indices:
            fh.write(f"{int(i)}\n")


def load_split(path, seed: int = -1) -> Split:
    section = None
    train, test = [], []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line == "train:":
                section = train
            elif line == "test:":
                section = test
            else:
                if section is None:
                    raise ValueError("index before section header")
                section.append(int(line))
    return Split(
        train_indices=np.asarray(train, dtype=np.int64),
        test_indices=np.asarray(test, dtype=np.int64),
        seed=seed,
    )


def stratified_holdout(y, fraction: float, seed):
    """Per-class holdout split; returns (main_idx, held_idx)."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    held = []
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        k = max(1, int(round(fraction * idx.size)))
        k = min(k, idx.size - 1) if idx.size > 1 else 0
        held.extend(idx[:k])
    held = np.sort(np.asarray(held, dtype=np.int64))
    mask = np.ones(y.size, dtype=bool)
    mask[held] = False
    return np.flatnonzero(mask), held


def stratified_kfold(y, n_folds: int, seed: int):
    """Deterministic stratified k-fold assignment.

    Returns a list of (train_idx, test_idx) pairs covering all rows.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=np.int64)
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        fold_of[idx] = np.arange(idx.size) % n_folds
    folds = []
    all_idx = np.arange(y.size)
    for f in range(n_folds):
        test_idx = all_idx[fold_of == f]
        train_idx = all_idx[fold_of != f]
        folds.append((train_idx, test_idx))
    return folds
