"""Structure learning: pairwise arc importances, the greedy DONE/PENDING
arc-addition search, and the maximum-weight spanning forest."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, discretize_equal_frequency, subsample
from .mixtable import TableConfig
from .network import MixNet, MixNetStructure, Node, fit_node, node_log_density


@dataclass(frozen=True)
class SearchConfig:
    maxpars: int = 3
    K: int = 6
    assume_symmetric: bool = True
    importance_bins: int = 16
    # "discretized" (equal-frequency, importance_bins buckets) or "continuous"
    importance_mode: str = "discretized"
    subsample_cap: int | None = 10_000
    table: TableConfig = field(default_factory=TableConfig)

    def __post_init__(self):
        if self.maxpars < 0 or self.K < 1:
            raise ValueError("need MAXPARS >= 0 and K >= 1")
        if self.importance_mode not in ("discretized", "continuous"):
            raise ValueError(f"unknown importance mode {self.importance_mode!r}")

    def replace(self, **kw) -> "SearchConfig":
        return SearchConfig(**{**self.__dict__, **kw})


@dataclass
class ImportanceMatrix:
    values: np.ndarray
    variables: tuple
    symmetric: bool
    provenance: str
    n_pair_fits: int = 0

    def __getitem__(self, ij):
        return self.values[ij]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow([""] + list(self.variables))
            for name, row in zip(self.variables, self.values):
                w.writerow([name] + [repr(float(x)) for x in row])


class NodeScorer:
    """Fits and caches node models on one dataset; a node's score is its
    share of the network BIC (conditional log-likelihood minus penalty)."""

    def __init__(self, data: Dataset, config: TableConfig):
        self.data = data
        self.config = config
        self.penalty = 0.5 * math.log(data.n_rows)
        self._cache = {}
        self.n_fits = 0

    def node(self, child: str, parents=()) -> Node:
        key = (child, frozenset(parents))
        if key not in self._cache:
            self.n_fits += 1
            node = fit_node(self.data, child, tuple(parents), self.config)
            score = float(node_log_density(node, self.data).sum()) - self.penalty * node.param_count
            self._cache[key] = (node, score)
        return self._cache[key][0]

    def score(self, child: str, parents=()) -> float:
        self.node(child, parents)
        return self._cache[(child, frozenset(parents))][1]


def importance_dataset(data: Dataset, config: SearchConfig) -> Dataset:
    if config.importance_mode == "discretized" and data.schema.continuous():
        return discretize_equal_frequency(data, config.importance_bins)[1]
    return data


def importance(data: Dataset, i: int, j: int, config: SearchConfig, scorer: NodeScorer | None = None) -> float:
    """BIC gain of the single arc ``X_i -> X_j`` over the empty network.

    Only node ``j`` differs between the two networks, so only its model is fitted.
    """
    if i == j:
        raise ValueError("importance needs two distinct variables")
    if scorer is None:
        scorer = NodeScorer(importance_dataset(data, config), config.table)
    names = scorer.data.schema.names
    return scorer.score(names[j], (names[i],)) - scorer.score(names[j])


def importance_matrix(data: Dataset, config: SearchConfig, scorer: NodeScorer | None = None) -> ImportanceMatrix:
    """All pairwise importances.

    In symmetric mode only ``i < j`` is fitted (``j`` as child) and mirrored.
    The asymmetry this hides comes only from which variable plays the child.
    """
    N = len(data.schema)
    if N < 2:
        raise ValueError("importance matrix needs at least two variables")
    if scorer is None:
        scorer = NodeScorer(importance_dataset(data, config), config.table)
    I = np.zeros((N, N))
    fits = 0
    for i in range(N):
        for j in range(N):
            if i == j or (config.assume_symmetric and j < i):
                continue
            I[i, j] = importance(data, i, j, config, scorer)
            fits += 1
            if config.assume_symmetric:
                I[j, i] = I[i, j]
    provenance = f"discretized({config.importance_bins})" if scorer.data is not data else "continuous"
    return ImportanceMatrix(I, tuple(data.schema.names), config.assume_symmetric, provenance, fits)


@dataclass
class SearchTrace:
    visit_order: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    rejected: list = field(default_factory=list)
    refits: int = 0


def greedy_parents(I: np.ndarray, maxpars: int, K: int, try_arc) -> tuple[dict, SearchTrace]:
    """The DONE/PENDING greedy arc search over variable indices.

    ``try_arc(child, parents, candidate)`` refits ``child`` with
    ``parents + [candidate]`` and returns True iff the score strictly improves
    (the caller keeps the improved node).  Ties are broken by lowest index.
    """
    I = np.asarray(I, dtype=float)
    N = I.shape[0]
    parents = {v: [] for v in range(N)}
    pending = list(range(N))
    done: list[int] = []
    trace = SearchTrace()
    off = I + np.diag(np.full(N, -np.inf))
    while pending:
        if not done:
            row_max = off[pending].max(axis=1)
            p = pending[int(np.argmax(row_max))]
        else:
            best = (-np.inf, None)
            for d in sorted(done):
                for q in pending:
                    if I[d, q] > best[0]:
                        best = (I[d, q], q)
            p = best[1] if best[1] is not None else pending[0]
        trace.visit_order.append(p)
        k = min(K, len(done))
        candidates = sorted(done, key=lambda d: (-I[d, p], d))[:k]
        for d in candidates:
            if len(parents[p]) >= maxpars or I[d, p] < 0:
                break
            trace.refits += 1
            if try_arc(p, list(parents[p]), d):
                parents[p].append(d)
                trace.accepted.append((d, p))
            else:
                trace.rejected.append((d, p))
        pending.remove(p)
        done.append(p)
    return parents, trace


def greedy_search(data: Dataset, imp: ImportanceMatrix, config: SearchConfig, scorer: NodeScorer | None = None) -> MixNet:
    """Start from the fitted empty network and add arcs DONE -> PENDING,
    accepting each only if the network BIC strictly increases."""
    names = data.schema.names
    if tuple(imp.variables) != tuple(names):
        raise ValueError("importance matrix does not match the schema")
    if scorer is None:
        scorer = NodeScorer(data, config.table)
    current = {v: () for v in names}
    bic_path = [sum(scorer.score(v) for v in names)]

    def try_arc(child, parents, candidate):
        c = names[child]
        new = tuple(names[i] for i in parents + [candidate])
        old_score = scorer.score(c, current[c])
        new_score = scorer.score(c, new)
        if new_score > old_score:
            current[c] = new
            bic_path.append(bic_path[-1] + new_score - old_score)
            return True
        return False

    _, trace = greedy_parents(imp.values, config.maxpars, config.K, try_arc)
    structure = MixNetStructure(tuple(names), current, config.maxpars)
    nodes = {v: scorer.node(v, current[v]) for v in names}
    net = MixNet(data.schema, structure, nodes, symbols=data.symbols)
    net.config["search"] = {
        "visit_order": [names[i] for i in trace.visit_order],
        "accepted": [[names[a], names[b]] for a, b in trace.accepted],
        "refits": trace.refits,
        "bic_path": bic_path,
        "importance_provenance": imp.provenance,
    }
    return net


def learn_mixnet(data: Dataset, config: SearchConfig, seed: int = 0) -> MixNet:
    """Subsample, compute importances, then run the greedy search.

    In continuous importance mode the importance fits and the search share
    one scorer, so each accept test reuses exactly the importance fits.
    """
    if config.subsample_cap is not None:
        data = subsample(data, config.subsample_cap, seed)
    scorer = NodeScorer(data, config.table)
    imp_scorer = scorer if config.importance_mode == "continuous" or not data.schema.continuous() else None
    imp = importance_matrix(data, config, imp_scorer)
    net = greedy_search(data, imp, config, scorer)
    net.config["importance"] = imp.values.tolist()
    return net


def max_spanning_forest(imp: ImportanceMatrix) -> MixNetStructure:
    """Kruskal over the positive entries of a symmetric importance matrix.

    Equal weights are taken in lowest ``(i, j)`` order.  Each tree is rooted
    at its lowest-index variable and arcs point away from the root.
    """
    I = np.asarray(imp.values if isinstance(imp, ImportanceMatrix) else imp, dtype=float)
    variables = tuple(imp.variables) if isinstance(imp, ImportanceMatrix) else tuple(f"x{i}" for i in range(I.shape[0]))
    N = I.shape[0]
    edges = sorted(((-I[i, j], i, j) for i in range(N) for j in range(i + 1, N) if I[i, j] > 0))
    root = list(range(N))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    adj = {v: [] for v in range(N)}
    for _, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            root[max(ri, rj)] = min(ri, rj)
            adj[i].append(j)
            adj[j].append(i)
    parents = {v: () for v in variables}
    seen = set()
    for r in range(N):
        if r in seen:
            continue
        seen.add(r)
        queue = [r]
        while queue:
            a = queue.pop(0)
            for b in sorted(adj[a]):
                if b not in seen:
                    seen.add(b)
                    parents[variables[b]] = (variables[a],)
                    queue.append(b)
    return MixNetStructure(variables, parents, 1)


def forest_edges(structure: MixNetStructure) -> set:
    """Undirected arc set as frozensets of variable names."""
    return {frozenset(a) for a in structure.arcs}
