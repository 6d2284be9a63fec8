"""Mixed-type tabular data: schema, loading, scaling, discretization, splits.

Continuous cells are stored as floats, discrete cells as integer-valued floats
in ``[0, arity)``.  All randomized operations take an explicit seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CONTINUOUS = "continuous"
DISCRETE = "discrete"


class DataError(ValueError):
    """Raised for malformed data files or schema violations."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    arity: int | None = None

    def __post_init__(self):
        if not self.name:
            raise DataError("column names must be non-empty")
        if self.kind not in (CONTINUOUS, DISCRETE):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == DISCRETE:
            if self.arity is None or self.arity < 2:
                raise DataError(f"discrete column {self.name!r} needs arity >= 2")
        elif self.arity is not None:
            raise DataError(f"continuous column {self.name!r} cannot have an arity")

    @property
    def is_discrete(self) -> bool:
        return self.kind == DISCRETE

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.is_discrete:
            out["arity"] = self.arity
        return out


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("column names must be unique")

    @classmethod
    def from_json(cls, items) -> "Schema":
        return cls(tuple(Column(d["name"], d["kind"], d.get("arity")) for d in items))

    @classmethod
    def load(cls, path) -> "Schema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> list:
        return [c.to_json() for c in self.columns]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def __len__(self):
        return len(self.columns)

    def __getitem__(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(name)

    def continuous(self) -> list[str]:
        return [c.name for c in self.columns if not c.is_discrete]

    def discrete(self) -> list[str]:
        return [c.name for c in self.columns if c.is_discrete]

    def arity(self, name: str) -> int:
        return self[name].arity


@dataclass(frozen=True)
class Dataset:
    """An ``R x N`` value matrix paired with its schema.

    ``symbols`` maps each discrete column to the original symbol of every
    index; ``meta`` carries free-form diagnostics (e.g. clamp counters).
    """

    schema: Schema
    values: np.ndarray
    symbols: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1 and len(self.schema) and values.size == 0:
            values = values.reshape(0, len(self.schema))
        if values.ndim != 2 or values.shape[1] != len(self.schema):
            raise DataError(
                f"value matrix shape {values.shape} does not match {len(self.schema)} columns"
            )
        for j, col in enumerate(self.schema.columns):
            if col.is_discrete and values.shape[0]:
                v = values[:, j]
                if np.any(v != np.round(v)) or v.min() < 0 or v.max() >= col.arity:
                    raise DataError(f"discrete column {col.name!r} has values outside [0, {col.arity})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self.symbols:
            object.__setattr__(
                self,
                "symbols",
                {c.name: [str(k) for k in range(c.arity)] for c in self.schema.columns if c.is_discrete},
            )

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index(name)]

    def columns(self, names) -> np.ndarray:
        idx = [self.schema.index(n) for n in names]
        return self.values[:, idx]

    def take(self, rows) -> "Dataset":
        return Dataset(self.schema, self.values[np.asarray(rows, dtype=int)], self.symbols, dict(self.meta))

    def with_values(self, values, schema: Schema | None = None, **meta) -> "Dataset":
        schema = self.schema if schema is None else schema
        symbols = self.symbols if schema is self.schema else {}
        return Dataset(schema, values, symbols, {**self.meta, **meta})


def load_dataset(path, schema: Schema) -> Dataset:
    """Read a headered UTF-8 CSV file into a :class:`Dataset`.

    Discrete symbols are assigned dense indices in order of first appearance.
    Missing cells are rejected.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header != schema.names:
            raise DataError(f"schema mismatch: header {header} != schema {schema.names}")
        ncol = len(schema)
        symbol_index = [dict() if c.is_discrete else None for c in schema.columns]
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != ncol:
                raise DataError(f"row arity mismatch at line {lineno}: {len(raw)} cells, expected {ncol}")
            row = []
            for j, (cell, col) in enumerate(zip(raw, schema.columns)):
                cell = cell.strip()
                if cell == "":
                    raise DataError(f"missing value at line {lineno}, column {col.name!r}")
                if col.is_discrete:
                    table = symbol_index[j]
                    if cell not in table:
                        if len(table) >= col.arity:
                            raise DataError(
                                f"column {col.name!r} declares arity {col.arity} but line {lineno} "
                                f"introduces symbol {cell!r} (already {len(table)} distinct)"
                            )
                        table[cell] = len(table)
                    row.append(table[cell])
                else:
                    try:
                        x = float(cell)
                    except ValueError:
                        raise DataError(f"unparseable cell {cell!r} at line {lineno}, column {col.name!r}") from None
                    if not math.isfinite(x):
                        raise DataError(f"non-finite cell {cell!r} at line {lineno}, column {col.name!r}")
                    row.append(x)
            rows.append(row)
    symbols = {}
    for col, table in zip(schema.columns, symbol_index):
        if col.is_discrete:
            names = sorted(table, key=table.get)
            # pad unseen symbols so every index has a printable name
            names += [f"<unseen{k}>" for k in range(len(names), col.arity)]
            symbols[col.name] = names
    values = np.array(rows, dtype=float).reshape(len(rows), len(schema))
    return Dataset(schema, values, symbols)


def encode_with_symbols(path, schema: Schema, symbols: dict) -> Dataset:
    """Load a CSV using a fixed symbol map (for scoring against a saved model)."""
    raw = load_dataset(path, schema)
    values = np.array(raw.values)
    for name, known in symbols.items():
        j = schema.index(name)
        lookup = {s: k for k, s in enumerate(known)}
        seen = raw.symbols[name]
        for k_local, sym in enumerate(seen):
            if sym.startswith("<unseen"):
                continue
            if sym not in lookup:
                raise DataError(f"column {name!r}: symbol {sym!r} unknown to the model")
            values[raw.values[:, j] == k_local, j] = lookup[sym]
    return Dataset(schema, values, {k: list(v) for k, v in symbols.items()})


def write_csv(data: Dataset, path) -> None:
    """Write ``data`` as CSV with discrete indices mapped back to symbols."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(data.schema.names)
        for row in data.values:
            out = []
            for x, col in zip(row, data.schema.columns):
                out.append(data.symbols[col.name][int(x)] if col.is_discrete else repr(float(x)))
            w.writerow(out)
    tmp.replace(path)


# -- scaling ---------------------------------------------------------------


@dataclass(frozen=True)
class Scaling:
    """Per-column affine map of continuous columns onto ``[0, 1]``."""

    lo: dict
    span: dict

    def apply(self, data: Dataset, clamp: bool = True) -> Dataset:
        values = np.array(data.values)
        for name in self.lo:
            j = data.schema.index(name)
            if self.span[name] > 0:
                col = (values[:, j] - self.lo[name]) / self.span[name]
            else:
                col = np.full(values.shape[0], 0.5)
            values[:, j] = np.clip(col, 0.0, 1.0) if clamp else col
        return data.with_values(values)

    def to_json(self) -> dict:
        return {"lo": self.lo, "span": self.span}

    @classmethod
    def from_json(cls, d) -> "Scaling":
        return cls(dict(d["lo"]), dict(d["span"]))


def add_noise(data: Dataset, noise_amplitude: float, seed: int, relative: bool = False) -> Dataset:
    """Add uniform noise on ``[-a/2, a/2]`` to every continuous cell.

    With ``relative=True`` the amplitude is a fraction of each column's range.
    """
    if noise_amplitude < 0:
        raise ValueError("noise_amplitude must be >= 0")
    rng = np.random.default_rng(seed)
    values = np.array(data.values)
    for name in data.schema.continuous():
        j = data.schema.index(name)
        a = noise_amplitude
        if relative and values.shape[0]:
            a *= float(values[:, j].max() - values[:, j].min())
        u = rng.uniform(-0.5, 0.5, size=values.shape[0])
        if a > 0:
            values[:, j] += a * u
    return data.with_values(values)


def fit_scaling(data: Dataset) -> Scaling:
    lo, span = {}, {}
    for name in data.schema.continuous():
        col = data.column(name)
        lo[name] = float(col.min())
        span[name] = float(col.max() - col.min())
    return Scaling(lo, span)


def preprocess(data: Dataset, noise_amplitude: float = 0.0, seed: int = 0, relative: bool = False) -> Dataset:
    """Add uniform noise, then rescale each continuous column onto ``[0, 1]``.

    Constant columns map to 0.5.  Discrete columns are untouched.
    """
    noisy = add_noise(data, noise_amplitude, seed, relative=relative)
    return fit_scaling(noisy).apply(noisy, clamp=False)


# -- discretization --------------------------------------------------------


@dataclass(frozen=True)
class DiscretizationMap:
    """Interior cut points per continuous column; buckets are
    ``[0, c1], (c1, c2], ..., (c_last, 1]``."""

    cuts: dict

    def arity(self, name: str) -> int:
        return len(self.cuts[name]) + 1

    def bucketize(self, name: str, x) -> np.ndarray:
        return np.searchsorted(self.cuts[name], np.asarray(x, dtype=float), side="left")

    def edges(self, name: str) -> np.ndarray:
        return np.concatenate([[0.0], self.cuts[name], [1.0]])

    def widths(self, name: str) -> np.ndarray:
        return np.diff(self.edges(name))

    def to_json(self) -> dict:
        return {k: [float(c) for c in v] for k, v in self.cuts.items()}

    @classmethod
    def from_json(cls, d) -> "DiscretizationMap":
        return cls({k: np.asarray(v, dtype=float) for k, v in d.items()})


def equal_frequency_cuts(x: np.ndarray, F: int) -> np.ndarray:
    """Cut points at the rank ``ceil(j R / F)`` order statistics, ``j < F``.

    Duplicates collapse and cuts outside the open interval (0, 1) are dropped,
    so the effective arity may be below ``F``.
    """
    xs = np.sort(np.asarray(x, dtype=float))
    R = xs.size
    if R == 0:
        return np.empty(0)
    ranks = [math.ceil(j * R / F) for j in range(1, F)]
    cuts = np.unique(xs[np.asarray(ranks, dtype=int) - 1])
    cuts = cuts[(cuts > 0.0) & (cuts < 1.0)]
    # a cut at the column maximum would leave an empty top bucket
    return cuts[cuts < xs[-1]]


def discretize_equal_frequency(data: Dataset, F: int, dmap: DiscretizationMap | None = None):
    """Bucketize every continuous column into at most ``F`` equal-count buckets.

    Returns ``(map, discrete_dataset)``.  Passing ``dmap`` reuses existing
    cut points (e.g. train-fold cuts applied to a test fold).
    """
    if F < 2:
        raise ValueError("F must be >= 2")
    if dmap is None:
        dmap = DiscretizationMap({n: equal_frequency_cuts(data.column(n), F) for n in data.schema.continuous()})
    columns = []
    values = np.array(data.values)
    for j, col in enumerate(data.schema.columns):
        if col.is_discrete:
            columns.append(col)
            continue
        values[:, j] = dmap.bucketize(col.name, values[:, j])
        # arity-1 columns are kept as discrete with a dummy second symbol
        columns.append(Column(col.name, DISCRETE, max(2, dmap.arity(col.name))))
    schema = Schema(tuple(columns))
    symbols = {c.name: data.symbols.get(c.name, [str(k) for k in range(c.arity)]) for c in columns if c.is_discrete}
    for c in columns:
        if c.name in dmap.cuts:
            symbols[c.name] = [f"b{k}" for k in range(c.arity)]
    return dmap, Dataset(schema, values, symbols, dict(data.meta))


# -- splitting -------------------------------------------------------------


def cv_folds(n_rows: int, folds: int, seed: int) -> list[np.ndarray]:
    """Test-row index blocks of a seeded permutation, sizes differing by <= 1."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if n_rows < folds:
        raise DataError(f"cannot split {n_rows} rows into {folds} folds")
    perm = np.random.default_rng(seed).permutation(n_rows)
    return [np.sort(b) for b in np.array_split(perm, folds)]


def cv_splits(data: Dataset, folds: int, seed: int) -> list[tuple[Dataset, Dataset]]:
    out = []
    blocks = cv_folds(data.n_rows, folds, seed)
    for test in blocks:
        mask = np.ones(data.n_rows, dtype=bool)
        mask[test] = False
        out.append((data.take(np.flatnonzero(mask)), data.take(test)))
    return out


def subsample(data: Dataset, cap: int, seed: int) -> Dataset:
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if data.n_rows <= cap:
        return data
    rows = np.random.default_rng(seed).choice(data.n_rows, size=cap, replace=False)
    return data.take(np.sort(rows))
