"""Loading, encoding and scaling of mixed numerical/categorical tables.

The end product is a :class:`MixedDataMatrix`: a numerical block scaled
column-wise onto ``[-beta, beta]`` and a categorical block of one-hot
indicators coded as ``+1`` (level present) / ``-1`` (level absent).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from ._toml import load_toml
from .errors import (
    ConstantColumn,
    DegenerateInput,
    DimensionMismatch,
    EmptyAfterDrop,
    SchemaError,
    SchemaMismatch,
    UnknownCategory,
)

MISSING_TOKENS = ("?", "")


class Kind(str, Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ColumnSchema:
    """Declaration of one raw input column."""

    name: str
    kind: Kind
    categories: tuple[str, ...] = ()
    label: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if not self.name:
            raise SchemaError("column name must be non-empty")
        if self.kind is Kind.CATEGORICAL:
            if len(set(self.categories)) < 2:
                raise SchemaError(
                    f"categorical column {self.name!r} needs at least 2 distinct categories"
                )
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"duplicate categories in column {self.name!r}")
        elif self.categories:
            raise SchemaError(f"numerical column {self.name!r} cannot list categories")


def validate_schema(schema: Sequence[ColumnSchema]) -> list[ColumnSchema]:
    schema = list(schema)
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    if sum(c.label for c in schema) > 1:
        raise SchemaError("at most one column may be flagged as label")
    return schema


def load_schema(path) -> list[ColumnSchema]:
    """Read a TOML schema file made of ``[[column]]`` tables.

    Each table takes the keys ``name``, ``kind`` (``"numerical"`` or
    ``"categorical"``), ``categories`` (categorical only) and ``label``.
    """
    doc = load_toml(path)
    if "column" not in doc:
        raise SchemaError(f"{path}: no [[column]] tables found")
    cols = []
    for entry in doc["column"]:
        unknown = set(entry) - {"name", "kind", "categories", "label"}
        if unknown:
            raise SchemaError(f"{path}: unknown schema keys {sorted(unknown)}")
        try:
            cols.append(
                ColumnSchema(
                    name=entry["name"],
                    kind=entry["kind"],
                    categories=tuple(entry.get("categories", ())),
                    label=bool(entry.get("label", False)),
                )
            )
        except KeyError as exc:
            raise SchemaError(f"{path}: column missing key {exc}") from None
        except ValueError as exc:
            raise SchemaError(f"{path}: {exc}") from None
    return validate_schema(cols)


def feature_width(schema: Sequence[ColumnSchema]) -> tuple[int, int]:
    """(p1, p2) implied by a schema before any data is seen."""
    p1 = sum(1 for c in schema if not c.label and c.kind is Kind.NUMERICAL)
    p2 = sum(len(c.categories) for c in schema if not c.label and c.kind is Kind.CATEGORICAL)
    return p1, p2


@dataclass(frozen=True)
class RawTable:
    """Complete rows of typed cells (floats for numerical, str otherwise)."""

    schema: tuple[ColumnSchema, ...]
    rows: tuple[tuple, ...]
    n_dropped: int = 0

    @property
    def n_rows(self):
        return len(self.rows)

    def column(self, name):
        idx = [c.name for c in self.schema].index(name)
        return [r[idx] for r in self.rows]


def load_csv(path, schema: Sequence[ColumnSchema], header: bool = True,
             missing: Sequence[str] = MISSING_TOKENS) -> RawTable:
    """Read a CSV file against a schema, dropping rows with missing cells.

    Raises FileNotFoundError, SchemaMismatch or EmptyAfterDrop.
    """
    schema = validate_schema(schema)
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    names = [c.name for c in schema]
    missing = set(missing)
    rows = []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if header:
            try:
                head = [h.strip() for h in next(reader)]
            except StopIteration:
                raise SchemaMismatch(f"{path}: empty file, expected a header row") from None
            if head != names:
                raise SchemaMismatch(f"{path}: header {head} does not match schema {names}")
        for lineno, cells in enumerate(reader, start=2 if header else 1):
            if not cells:
                continue
            if len(cells) != len(schema):
                raise SchemaMismatch(
                    f"{path}:{lineno}: {len(cells)} cells, schema has {len(schema)} columns"
                )
            cells = [c.strip() for c in cells]
            if any(c in missing for c in cells):
                dropped += 1
                continue
            typed = []
            for col, cell in zip(schema, cells):
                if col.kind is Kind.NUMERICAL and not col.label:
                    try:
                        typed.append(float(cell))
                    except ValueError:
                        raise SchemaMismatch(
                            f"{path}:{lineno}: non-numeric value {cell!r} in column {col.name!r}"
                        ) from None
                else:
                    typed.append(cell)
            rows.append(tuple(typed))
    if not rows:
        raise EmptyAfterDrop(f"{path}: no complete rows ({dropped} dropped)")
    return RawTable(tuple(schema), tuple(rows), dropped)


def subsample(raw: RawTable, max_rows: int | None, seed: int = 0) -> RawTable:
    """Keep at most ``max_rows`` rows, drawn without replacement, original order kept."""
    if max_rows is None or raw.n_rows <= max_rows:
        return raw
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(raw.n_rows, size=max_rows, replace=False))
    return RawTable(raw.schema, tuple(raw.rows[i] for i in keep), raw.n_dropped)


@dataclass(frozen=True, eq=False)
class EncodedTable:
    """One-hot encoded but not yet scaled mixed table."""

    num_block: np.ndarray
    cat_block: np.ndarray
    num_names: tuple[str, ...]
    cat_names: tuple[str, ...]
    categorical_groups: tuple[tuple[int, ...], ...]
    labels: np.ndarray | None = None
    label_names: tuple[str, ...] = ()
    dropped_levels: tuple[str, ...] = ()


def encode(raw: RawTable, schema: Sequence[ColumnSchema] | None = None,
           drop_unobserved: bool = False) -> EncodedTable:
    """Expand each categorical column into one ``+1/-1`` indicator per level.

    With ``drop_unobserved`` the indicator columns of levels that never
    occur in ``raw`` are left out (they would be constant ``-1``).
    """
    schema = list(raw.schema if schema is None else schema)
    num_cols, cat_cols, labels, label_names = [], [], None, ()
    num_names, cat_names, groups, dropped = [], [], [], []
    n = raw.n_rows
    for j, col in enumerate(schema):
        values = [r[j] for r in raw.rows]
        if col.label:
            if col.kind is Kind.CATEGORICAL:
                lookup = {c: i for i, c in enumerate(col.categories)}
                bad = sorted({v for v in values if v not in lookup})
                if bad:
                    raise UnknownCategory(f"label column {col.name!r}: unknown values {bad}")
                labels = np.array([lookup[v] for v in values], dtype=np.int64)
                label_names = col.categories
            else:
                label_names_arr, labels = np.unique(np.asarray(values), return_inverse=True)
                label_names = tuple(str(x) for x in label_names_arr)
            continue
        if col.kind is Kind.NUMERICAL:
            num_cols.append(np.asarray(values, dtype=float))
            num_names.append(col.name)
            continue
        lookup = {c: i for i, c in enumerate(col.categories)}
        codes = np.empty(n, dtype=np.int64)
        for i, v in enumerate(values):
            try:
                codes[i] = lookup[v]
            except KeyError:
                raise UnknownCategory(
                    f"column {col.name!r}: value {v!r} not in categories {list(col.categories)}"
                ) from None
        present = np.bincount(codes, minlength=len(col.categories)) > 0
        group = []
        for level, cat in enumerate(col.categories):
            if drop_unobserved and not present[level]:
                dropped.append(f"{col.name}={cat}")
                continue
            group.append(len(cat_cols))
            cat_cols.append(np.where(codes == level, 1.0, -1.0))
            cat_names.append(f"{col.name}={cat}")
        groups.append(tuple(group))
    num = np.column_stack(num_cols) if num_cols else np.empty((n, 0))
    cat = np.column_stack(cat_cols) if cat_cols else np.empty((n, 0))
    return EncodedTable(num, cat, tuple(num_names), tuple(cat_names), tuple(groups),
                        labels, tuple(label_names), tuple(dropped))


@dataclass(frozen=True, eq=False)
class ScalingParams:
    """Per-column affine map ``x -> 2*beta*(x - min)/(max - min) - beta``."""

    mins: np.ndarray
    maxs: np.ndarray
    beta: float

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        out = 2.0 * self.beta * (x - self.mins) / (self.maxs - self.mins) - self.beta
        return out


def min_max_scale(x, beta: float = 1.0, names: Sequence[str] | None = None):
    """Scale every column of ``x`` onto exactly ``[-beta, beta]``.

    Returns ``(scaled, ScalingParams)``; a constant column raises ConstantColumn.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    x = np.asarray(x, dtype=float)
    mins = x.min(axis=0)
    maxs = x.max(axis=0)
    const = np.flatnonzero(~(maxs > mins))
    if const.size:
        which = [names[j] for j in const] if names is not None else const.tolist()
        raise ConstantColumn(f"constant column(s) cannot be scaled: {which}")
    params = ScalingParams(mins, maxs, float(beta))
    return np.clip(params.apply(x), -beta, beta), params


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MixedDataMatrix:
    """Preprocessed observations: scaled numerical block + ``+1/-1`` categorical block.

    ``categorical_groups`` lists, per original categorical variable, the
    indices of its indicator columns in ``cat_block``; it defaults to one
    group per column.
    """

    num_block: np.ndarray
    cat_block: np.ndarray
    column_names: tuple[str, ...] | None = None
    beta: float = 1.0
    labels: np.ndarray | None = None
    categorical_groups: tuple[tuple[int, ...], ...] | None = None
    label_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        num = _frozen(self.num_block)
        cat = _frozen(self.cat_block)
        if num.ndim != 2 or cat.ndim != 2:
            raise DimensionMismatch("num_block and cat_block must be 2-D")
        if num.shape[0] != cat.shape[0]:
            raise DimensionMismatch(
                f"row counts differ: num {num.shape[0]} vs cat {cat.shape[0]}"
            )
        n, p1 = num.shape
        p2 = cat.shape[1]
        if n < 2:
            raise DegenerateInput(f"need at least 2 observations, got {n}")
        if p1 < 1 or p2 < 1:
            raise DegenerateInput(
                f"need at least one numerical and one categorical column (p1={p1}, p2={p2})"
            )
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not np.all(np.isfinite(num)):
            raise ValueError("num_block contains non-finite values")
        if np.any(np.abs(num) > self.beta * (1 + 1e-12)):
            raise ValueError(f"num_block entries must lie in [-{self.beta}, {self.beta}]")
        if not np.all((cat == 1.0) | (cat == -1.0)):
            raise ValueError("cat_block entries must be exactly -1 or +1")
        names = self.column_names
        if names is None:
            names = tuple(f"num{j}" for j in range(p1)) + tuple(f"cat{j}" for j in range(p2))
        names = tuple(names)
        if len(names) != p1 + p2:
            raise DimensionMismatch(f"{len(names)} column names for {p1 + p2} columns")
        groups = self.categorical_groups
        if groups is None:
            groups = tuple((j,) for j in range(p2))
        groups = tuple(tuple(int(j) for j in g) for g in groups)
        flat = sorted(j for g in groups for j in g)
        if flat != list(range(p2)):
            raise ValueError("categorical_groups must partition the categorical columns")
        labels = self.labels
        if labels is not None:
            labels = _frozen(labels, dtype=np.int64)
            if labels.shape != (n,):
                raise DimensionMismatch(f"labels must have shape ({n},), got {labels.shape}")
        object.__setattr__(self, "num_block", num)
        object.__setattr__(self, "cat_block", cat)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "categorical_groups", groups)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "label_names", tuple(self.label_names))

    @property
    def n(self):
        return self.num_block.shape[0]

    @property
    def p1(self):
        return self.num_block.shape[1]

    @property
    def p2(self):
        return self.cat_block.shape[1]

    @property
    def p(self):
        return self.p1 + self.p2

    @property
    def values(self):
        """The full ``n x p`` matrix, numerical variables first."""
        return np.hstack([self.num_block, self.cat_block])

    @property
    def cat01(self):
        """Categorical block recoded from ``{-1, +1}`` to ``{0, 1}``."""
        return (self.cat_block + 1.0) / 2.0

    def is_categorical(self, j):
        return j >= self.p1

    def categorical_codes(self):
        """Level index per original categorical variable, shape ``(n, n_groups)``.

        Rows with no active indicator in a group (possible after dropping
        levels) get code ``-1``.
        """
        codes = np.empty((self.n, len(self.categorical_groups)), dtype=np.int64)
        for g, cols in enumerate(self.categorical_groups):
            block = self.cat_block[:, list(cols)]
            hit = block > 0
            codes[:, g] = np.where(hit.any(axis=1), hit.argmax(axis=1), -1)
        return codes


def scale(table: EncodedTable, beta: float = 1.0):
    """Scale the numerical block onto ``[-beta, beta]``; returns (MixedDataMatrix, ScalingParams)."""
    scaled, params = min_max_scale(table.num_block, beta, names=table.num_names)
    data = MixedDataMatrix(
        num_block=scaled,
        cat_block=table.cat_block,
        column_names=table.num_names + table.cat_names,
        beta=beta,
        labels=table.labels,
        categorical_groups=table.categorical_groups,
        label_names=table.label_names,
    )
    return data, params


@dataclass(frozen=True)
class IngestInfo:
    n_rows: int
    n_dropped: int
    dropped_levels: tuple[str, ...]
    p1: int
    p2: int


def ingest(data_path, schema, beta: float = 1.0, header: bool = True,
           row_cap: int | None = None, seed: int = 0, drop_unobserved: bool = False):
    """load_csv -> subsample -> encode -> scale in one call.

    ``schema`` is either a path to a schema file or a list of ColumnSchema.
    Returns ``(MixedDataMatrix, IngestInfo)``.
    """
    if isinstance(schema, (str, Path)):
        schema = load_schema(schema)
    raw = subsample(load_csv(data_path, schema, header=header), row_cap, seed)
    table = encode(raw, schema, drop_unobserved=drop_unobserved)
    data, _ = scale(table, beta)
    info = IngestInfo(data.n, raw.n_dropped, table.dropped_levels, data.p1, data.p2)
    return data, info


def save_matrix(path, data: MixedDataMatrix):
    """Persist a MixedDataMatrix as ``.npz``."""
    groups = np.array([len(g) for g in data.categorical_groups], dtype=np.int64)
    order = np.array([j for g in data.categorical_groups for j in g], dtype=np.int64)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            num_block=data.num_block,
            cat_block=data.cat_block,
            column_names=np.array(data.column_names, dtype=str),
            beta=np.array(data.beta),
            labels=data.labels if data.labels is not None else np.empty(0, dtype=np.int64),
            has_labels=np.array(data.labels is not None),
            group_sizes=groups,
            group_order=order,
            label_names=np.array(data.label_names, dtype=str),
        )


def load_matrix(path) -> MixedDataMatrix:
    with np.load(path, allow_pickle=False) as z:
        sizes = z["group_sizes"].tolist()
        order = z["group_order"].tolist()
        groups, start = [], 0
        for s in sizes:
            groups.append(tuple(order[start:start + s]))
            start += s
        return MixedDataMatrix(
            num_block=z["num_block"],
            cat_block=z["cat_block"],
            column_names=tuple(z["column_names"].tolist()),
            beta=float(z["beta"]),
            labels=z["labels"] if bool(z["has_labels"]) else None,
            categorical_groups=tuple(groups),
            label_names=tuple(z["label_names"].tolist()),
        )
