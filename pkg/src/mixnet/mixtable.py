"""Mixture tables: a probability and a Gaussian mixture for every joint
assignment of a set of discrete variables."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import gmm
from .dataset import Dataset
from .gmm import EmConfig, GaussianMixture


@dataclass(frozen=True)
class TableConfig:
    pseudocount: float = 0.5
    min_cell_rows: int = 10
    em: EmConfig = field(default_factory=EmConfig)

    def __post_init__(self):
        if self.pseudocount < 0:
            raise ValueError("pseudocount must be >= 0")
        if self.min_cell_rows < 1:
            raise ValueError("min_cell_rows must be >= 1")

    def replace(self, **kw) -> "TableConfig":
        return TableConfig(**{**self.__dict__, **kw})


class MixtureTable:
    """Cells are stored in lexicographic order of the discrete assignment
    (first discrete variable most significant)."""

    def __init__(self, discrete_vars, arities, continuous_vars, probs, mixtures):
        self.discrete_vars = tuple(discrete_vars)
        self.arities = tuple(int(a) for a in arities)
        self.continuous_vars = tuple(continuous_vars)
        probs = np.asarray(probs, dtype=float)
        n_cells = math.prod(self.arities)
        if probs.shape != (n_cells,) or len(mixtures) != n_cells:
            raise ValueError(f"expected {n_cells} cells, got {probs.shape} probs / {len(mixtures)} mixtures")
        if abs(probs.sum() - 1.0) > 1e-12 * max(1, n_cells) or np.any(probs < 0):
            raise ValueError(f"cell probabilities must sum to 1 (sum={probs.sum()!r})")
        for m in mixtures:
            if m.variables != self.continuous_vars:
                raise ValueError(f"cell mixture over {m.variables}, table over {self.continuous_vars}")
        probs.setflags(write=False)
        self.probs = probs
        self.mixtures = tuple(mixtures)

    @property
    def variables(self) -> tuple:
        return self.discrete_vars + self.continuous_vars

    @property
    def n_cells(self) -> int:
        return self.probs.size

    def assignments(self):
        return itertools.product(*(range(a) for a in self.arities))

    @property
    def entries(self) -> dict:
        return {q: (float(p), m) for q, p, m in zip(self.assignments(), self.probs, self.mixtures)}

    def cell_index(self, Q) -> np.ndarray:
        """Flat cell index for each row of a discrete-assignment matrix."""
        Q = np.asarray(Q)
        if not self.arities:
            return np.zeros(Q.shape[0] if Q.ndim == 2 else 1, dtype=int)
        Q = Q.astype(int).reshape(-1, len(self.arities))
        for j, a in enumerate(self.arities):
            if np.any((Q[:, j] < 0) | (Q[:, j] >= a)):
                raise ValueError(f"assignment out of range for {self.discrete_vars[j]!r} (arity {a})")
        return np.ravel_multi_index(Q.T, self.arities)

    def log_density(self, Q, C) -> np.ndarray:
        """``log P(q) + log P(c | q)`` for each row of ``Q`` and ``C``."""
        cells = self.cell_index(Q)
        C = np.asarray(C, dtype=float).reshape(cells.size, len(self.continuous_vars))
        out = np.log(self.probs[cells])
        if self.continuous_vars:
            for cell in np.unique(cells):
                rows = cells == cell
                out[rows] += gmm.log_density(self.mixtures[cell], C[rows])
        return out

    def log_density_rows(self, data: Dataset) -> np.ndarray:
        return self.log_density(data.columns(self.discrete_vars), data.columns(self.continuous_vars))

    def to_json(self) -> dict:
        return {
            "discrete_vars": list(self.discrete_vars),
            "arities": list(self.arities),
            "continuous_vars": list(self.continuous_vars),
            "cells": [
                {"q": list(q), "prob": float(p), "mixture": m.to_json()}
                for q, p, m in zip(self.assignments(), self.probs, self.mixtures)
            ],
        }

    @classmethod
    def from_json(cls, d) -> "MixtureTable":
        cells = d["cells"]
        return cls(
            d["discrete_vars"],
            d["arities"],
            d["continuous_vars"],
            [c["prob"] for c in cells],
            [GaussianMixture.from_json(c["mixture"]) for c in cells],
        )


def table_log_density(table: MixtureTable, q, c) -> float:
    return float(table.log_density(np.asarray(q, dtype=float)[None], np.asarray(c, dtype=float)[None])[0])


def table_param_count(table: MixtureTable) -> int:
    """``(cells - 1)`` plus the free parameters of every cell mixture."""
    return (table.n_cells - 1) + sum(gmm.param_count(m) for m in table.mixtures)


def fit_table(data: Dataset, Q, C, config: TableConfig) -> MixtureTable:
    """Smoothed cell frequencies plus a BIC-selected mixture per cell.

    Cells with fewer than ``min_cell_rows`` rows share one mixture fitted on
    all rows.
    """
    Q, C = tuple(Q), tuple(C)
    if set(Q) & set(C):
        raise ValueError("discrete and continuous variable lists overlap")
    for v in Q + C:
        if v not in data.schema.names:
            raise KeyError(f"unknown variable {v!r}")
    for v in Q:
        if not data.schema[v].is_discrete:
            raise ValueError(f"{v!r} is not discrete")
    for v in C:
        if data.schema[v].is_discrete:
            raise ValueError(f"{v!r} is not continuous")
    R = data.n_rows
    if R == 0:
        raise ValueError("empty data")
    arities = tuple(data.schema.arity(v) for v in Q)
    n_cells = math.prod(arities)
    if Q:
        cells = np.ravel_multi_index(data.columns(Q).astype(int).T, arities)
    else:
        cells = np.zeros(R, dtype=int)
    counts = np.bincount(cells, minlength=n_cells).astype(float)
    a = config.pseudocount
    probs = (counts + a) / (R + a * n_cells)
    probs = probs / probs.sum()

    if not C:
        mixtures = [gmm.unit_mixture()] * n_cells
        return MixtureTable(Q, arities, C, probs, mixtures)

    X = data.columns(C)
    fallback = None
    mixtures = []
    for cell in range(n_cells):
        rows = cells == cell
        if counts[cell] >= config.min_cell_rows:
            em = config.em.replace(seed=gmm.derive_seed(config.em.seed, *Q, "|", *C, cell))
            mixtures.append(gmm.select_mixture(X[rows], em, variables=C))
        else:
            if fallback is None:
                em = config.em.replace(seed=gmm.derive_seed(config.em.seed, *Q, "|", *C, "all"))
                fallback = gmm.select_mixture(X, em, variables=C)
            mixtures.append(fallback)
    return MixtureTable(Q, arities, C, probs, mixtures)


def marginalize_out(table: MixtureTable, x: str) -> MixtureTable:
    """Remove variable ``x`` exactly.

    Continuous ``x``: same cells, each mixture loses one dimension.
    Discrete ``x``: cells that differ only in ``x`` merge, their mixtures
    combined in proportion to the conditional probability of each ``x`` value.
    """
    if x in table.continuous_vars:
        keep = [v for v in table.continuous_vars if v != x]
        mixtures = [gmm.marginalize(m, keep) for m in table.mixtures]
        return MixtureTable(table.discrete_vars, table.arities, keep, table.probs, mixtures)
    if x not in table.discrete_vars:
        raise KeyError(f"unknown variable {x!r}")
    axis = table.discrete_vars.index(x)
    new_vars = table.discrete_vars[:axis] + table.discrete_vars[axis + 1 :]
    new_arities = table.arities[:axis] + table.arities[axis + 1 :]
    P = table.probs.reshape(table.arities)
    cell_ids = np.arange(table.n_cells).reshape(table.arities)
    P = np.moveaxis(P, axis, -1).reshape(-1, table.arities[axis])
    cell_ids = np.moveaxis(cell_ids, axis, -1).reshape(-1, table.arities[axis])
    probs, mixtures = [], []
    for prow, ids in zip(P, cell_ids):
        total = prow.sum()
        probs.append(total)
        if not table.continuous_vars:
            mixtures.append(gmm.unit_mixture())
            continue
        # cells sharing the fallback mixture are merged before combining
        parts, weights = [], []
        for i, p in zip(ids, prow / total):
            m = table.mixtures[i]
            for j, seen in enumerate(parts):
                if seen is m:
                    weights[j] += p
                    break
            else:
                parts.append(m)
                weights.append(p)
        w = np.asarray(weights)
        mixtures.append(gmm.combine(parts, w / w.sum()))
    probs = np.asarray(probs)
    return MixtureTable(new_vars, new_arities, table.continuous_vars, probs / probs.sum(), mixtures)
