"""The comparison learners: independent mixtures, trees, single-Gaussian
nets, and pseudo-discrete (histogram) networks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, DiscretizationMap, Schema, discretize_equal_frequency, subsample
from .network import MixNet, MixNetStructure, fit_parameters
from .structure import SearchConfig, greedy_parents, learn_mixnet

F_GRID = (2, 4, 8, 16, 32, 64)


def baseline_budget(config: SearchConfig) -> SearchConfig:
    """Twice the EM restarts, standing in for extra fitting time."""
    em = config.table.em
    return config.replace(table=config.table.replace(em=em.replace(restarts=2 * em.restarts)))


def fit_mixnet(data: Dataset, config: SearchConfig, seed: int = 0) -> MixNet:
    return learn_mixnet(data, config, seed)


def fit_independent(data: Dataset, config: SearchConfig, seed: int = 0) -> MixNet:
    config = baseline_budget(config)
    if config.subsample_cap is not None:
        data = subsample(data, config.subsample_cap, seed)
    structure = MixNetStructure.empty(data.schema.names, maxpars=0)
    net = fit_parameters(structure, data, config.table)
    net.config["search"] = {"accepted": [], "refits": 0}
    return net


def fit_tree(data: Dataset, config: SearchConfig, seed: int = 0) -> MixNet:
    return learn_mixnet(data, baseline_budget(config).replace(maxpars=1), seed)


def fit_single_gaussian_net(data: Dataset, config: SearchConfig, seed: int = 0) -> MixNet:
    """One Gaussian per cell, any number of parents, all rows, and
    importances on the real-valued data."""
    n = max(1, len(data.schema) - 1)
    table = config.table.replace(em=config.table.em.replace(component_grid=(1,)))
    cfg = config.replace(table=table, maxpars=n, K=n, subsample_cap=None, importance_mode="continuous")
    return learn_mixnet(data, cfg, seed)


# -- pseudo-discrete networks ---------------------------------------------


@dataclass
class CPT:
    """Conditional table of a node over its own buckets (or values).

    Only parent configurations seen in training are stored; unseen ones use
    the smoothed prior row ``default``.
    """

    parents: tuple
    parent_arities: tuple
    arity: int
    rows: dict
    default: np.ndarray

    @property
    def n_configs(self) -> int:
        return math.prod(self.parent_arities)

    def lookup(self, config_index: np.ndarray, values: np.ndarray) -> np.ndarray:
        keys = np.array(sorted(self.rows), dtype=np.int64)
        values = np.asarray(values, dtype=np.int64)
        if keys.size == 0:
            return self.default[values]
        table = np.stack([self.rows[k] for k in keys.tolist()])
        pos = np.minimum(np.searchsorted(keys, config_index), keys.size - 1)
        found = keys[pos] == config_index
        return np.where(found, table[pos, values], self.default[values])

    def to_json(self) -> dict:
        return {
            "parents": list(self.parents),
            "parent_arities": list(self.parent_arities),
            "arity": self.arity,
            "default": self.default.tolist(),
            "rows": [[int(c), row.tolist()] for c, row in sorted(self.rows.items())],
        }

    @classmethod
    def from_json(cls, d) -> "CPT":
        return cls(
            tuple(d["parents"]),
            tuple(d["parent_arities"]),
            d["arity"],
            {int(c): np.asarray(row, dtype=float) for c, row in d["rows"]},
            np.asarray(d["default"], dtype=float),
        )


def _config_index(codes: np.ndarray, arities) -> np.ndarray:
    if not arities:
        return np.zeros(codes.shape[0], dtype=np.int64)
    return np.ravel_multi_index(codes.T, arities)


def fit_cpt(codes: np.ndarray, child: int, parents, arities, pseudocount: float, names) -> CPT:
    """Additively smoothed counts of ``child`` per parent configuration."""
    p_ar = tuple(arities[p] for p in parents)
    B = arities[child]
    cfg = _config_index(codes[:, list(parents)], p_ar)
    rows = {}
    uniq, inv = np.unique(cfg, return_inverse=True)
    counts = np.zeros((uniq.size, B))
    np.add.at(counts, (inv.reshape(-1), codes[:, child]), 1.0)
    smoothed = counts + pseudocount
    smoothed /= smoothed.sum(axis=1, keepdims=True)
    for c, row in zip(uniq.tolist(), smoothed):
        rows[c] = row
    return CPT(tuple(names[p] for p in parents), p_ar, B, rows, np.full(B, 1.0 / B))


class PseudoDiscreteNet:
    """Histogram network: bucket probabilities spread uniformly over each
    bucket of a continuous variable; discrete variables keep plain
    probabilities."""

    def __init__(self, schema: Schema, structure: MixNetStructure, F: int, dmap: DiscretizationMap, cpts: dict, symbols=None):
        self.schema = schema
        self.structure = structure
        self.F = F
        self.dmap = dmap
        self.cpts = dict(cpts)
        self.symbols = symbols
        self.config = {}

    @property
    def arcs(self):
        return self.structure.arcs

    def arities(self) -> dict:
        return {
            c.name: (c.arity if c.is_discrete else self.dmap.arity(c.name)) for c in self.schema.columns
        }

    def param_count(self) -> int:
        return sum(cpt.n_configs * (cpt.arity - 1) for cpt in self.cpts.values())

    def codes(self, data: Dataset) -> np.ndarray:
        """Bucket (or value) index of every cell."""
        codes = np.empty(data.values.shape, dtype=np.int64)
        for j, col in enumerate(self.schema.columns):
            x = data.values[:, j]
            if col.is_discrete:
                codes[:, j] = x.astype(np.int64)
            else:
                if np.any((x < 0.0) | (x > 1.0)):
                    raise ValueError(f"column {col.name!r} has values outside [0, 1]")
                codes[:, j] = self.dmap.bucketize(col.name, x)
        return codes


def _log_widths(schema: Schema, dmap: DiscretizationMap, name: str) -> np.ndarray | None:
    if schema[name].is_discrete:
        return None
    return np.log(dmap.widths(name))


def pseudo_discrete_row_log_density(net: PseudoDiscreteNet, data: Dataset) -> np.ndarray:
    if data.schema != net.schema:
        raise ValueError(f"schema mismatch: data {data.schema.names} vs model {net.schema.names}")
    codes = net.codes(data)
    names = net.schema.names
    out = np.zeros(data.n_rows)
    for v in names:
        cpt = net.cpts[v]
        j = names.index(v)
        pidx = [names.index(p) for p in cpt.parents]
        cfg = _config_index(codes[:, pidx], cpt.parent_arities)
        out += np.log(cpt.lookup(cfg, codes[:, j]))
        lw = _log_widths(net.schema, net.dmap, v)
        if lw is not None:
            out -= lw[codes[:, j]]
    return out


def pseudo_discrete_log_density(net: PseudoDiscreteNet, row) -> float:
    row = np.asarray(row, dtype=float).reshape(1, -1)
    return float(pseudo_discrete_row_log_density(net, Dataset(net.schema, row, net.symbols or {}))[0])


def pseudo_discrete_log_likelihood(net: PseudoDiscreteNet, data: Dataset) -> float:
    return float(pseudo_discrete_row_log_density(net, data).sum())


def pseudo_discrete_bic(net: PseudoDiscreteNet, data: Dataset) -> float:
    return pseudo_discrete_log_likelihood(net, data) - 0.5 * math.log(data.n_rows) * net.param_count()


def fit_pseudo_discrete_F(data: Dataset, F: int, config: SearchConfig, seed: int = 0) -> PseudoDiscreteNet:
    """Pseudo-discrete network with equal-frequency buckets of size ``F``."""
    if config.subsample_cap is not None:
        data = subsample(data, config.subsample_cap, seed)
    schema = data.schema
    names = schema.names
    dmap, _ = discretize_equal_frequency(data, F)
    arity_of = {c.name: (c.arity if c.is_discrete else dmap.arity(c.name)) for c in schema.columns}
    arities = [arity_of[n] for n in names]
    net0 = PseudoDiscreteNet(schema, MixNetStructure.empty(names), F, dmap, {})
    codes = net0.codes(data)
    R = data.n_rows
    penalty = 0.5 * math.log(R)
    a = config.table.pseudocount
    cache = {}

    def score(child, parents):
        key = (child, frozenset(parents))
        if key not in cache:
            cpt = fit_cpt(codes, child, sorted(parents), arities, a, names)
            cfg = _config_index(codes[:, sorted(parents)], cpt.parent_arities)
            ll = float(np.log(cpt.lookup(cfg, codes[:, child])).sum())
            lw = _log_widths(schema, dmap, names[child])
            if lw is not None:
                ll -= float(lw[codes[:, child]].sum())
            cache[key] = (cpt, ll - penalty * cpt.n_configs * (cpt.arity - 1))
        return cache[key][1]

    N = len(names)
    I = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            if i == j or (config.assume_symmetric and j < i):
                continue
            I[i, j] = score(j, (i,)) - score(j, ())
            if config.assume_symmetric:
                I[j, i] = I[i, j]

    def try_arc(child, parents, candidate):
        return score(child, parents + [candidate]) > score(child, parents)

    parents, trace = greedy_parents(I, config.maxpars, config.K, try_arc)
    cpts = {names[v]: cache[(v, frozenset(ps))][0] if (v, frozenset(ps)) in cache else None for v, ps in parents.items()}
    for v, ps in parents.items():
        if cpts[names[v]] is None:
            score(v, tuple(ps))
            cpts[names[v]] = cache[(v, frozenset(ps))][0]
    # CPT parent order is sorted by index; keep the structure consistent with it
    structure = MixNetStructure(tuple(names), {names[v]: tuple(names[p] for p in sorted(ps)) for v, ps in parents.items()}, config.maxpars)
    net = PseudoDiscreteNet(schema, structure, F, dmap, cpts, data.symbols)
    net.config["bic"] = sum(cache[(v, frozenset(ps))][1] for v, ps in parents.items())
    net.config["refits"] = trace.refits
    return net


def fit_pseudo_discrete(data: Dataset, F_grid=F_GRID, config: SearchConfig | None = None, seed: int = 0) -> PseudoDiscreteNet:
    """Fit one network per ``F`` and keep the highest training BIC
    (smaller ``F`` on ties)."""
    if not F_grid:
        raise ValueError("F_grid must be non-empty")
    config = config or SearchConfig()
    best, scores = None, {}
    for F in sorted(F_grid):
        net = fit_pseudo_discrete_F(data, F, config, seed)
        scores[F] = net.config["bic"]
        if best is None or scores[F] > best.config["bic"]:
            best = net
    best.config["bic_by_F"] = scores
    return best
