"""Mix-nets: per-node joint mixture tables turned into conditionals by
dividing through their exact parent marginals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import gmm
from .dataset import Dataset, Schema
from .mixtable import MixtureTable, TableConfig, fit_table, marginalize_out, table_param_count

LOG_DENSITY_FLOOR = -700.0


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class MixNetStructure:
    variables: tuple
    parents: dict
    maxpars: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        parents = {v: tuple(self.parents.get(v, ())) for v in self.variables}
        for v, ps in parents.items():
            for p in ps:
                if p not in parents:
                    raise StructureError(f"parent {p!r} of {v!r} is not a variable")
                if p == v:
                    raise StructureError(f"self-loop on {v!r}")
            if self.maxpars is not None and len(ps) > self.maxpars:
                raise StructureError(f"{v!r} has {len(ps)} parents, MAXPARS={self.maxpars}")
        object.__setattr__(self, "parents", parents)
        self.topological_order()

    @classmethod
    def empty(cls, variables, maxpars=None) -> "MixNetStructure":
        return cls(tuple(variables), {}, maxpars)

    def with_arc(self, parent, child) -> "MixNetStructure":
        parents = dict(self.parents)
        parents[child] = parents[child] + (parent,)
        return MixNetStructure(self.variables, parents, self.maxpars)

    @property
    def arcs(self) -> list:
        return [(p, v) for v in self.variables for p in self.parents[v]]

    def topological_order(self) -> list:
        """Kahn's algorithm, lowest variable index first among ready nodes."""
        remaining = {v: set(self.parents[v]) for v in self.variables}
        order = []
        while remaining:
            ready = [v for v in self.variables if v in remaining and not remaining[v]]
            if not ready:
                raise StructureError("parent relation is cyclic")
            v = ready[0]
            order.append(v)
            del remaining[v]
            for ps in remaining.values():
                ps.discard(v)
        return order

    def to_json(self) -> dict:
        return {"variables": list(self.variables), "parents": {v: list(p) for v, p in self.parents.items()}, "maxpars": self.maxpars}

    @classmethod
    def from_json(cls, d) -> "MixNetStructure":
        return cls(tuple(d["variables"]), {v: tuple(p) for v, p in d["parents"].items()}, d.get("maxpars"))


@dataclass(frozen=True)
class Node:
    variable: str
    parents: tuple
    joint: MixtureTable
    parent_marginal: MixtureTable

    @property
    def param_count(self) -> int:
        return table_param_count(self.joint)


def node_variables(schema: Schema, child, parents):
    """Discrete and continuous members of ``{child} + parents`` in schema order."""
    members = {child, *parents}
    Q = tuple(n for n in schema.discrete() if n in members)
    C = tuple(n for n in schema.continuous() if n in members)
    return Q, C


def fit_node(data: Dataset, child: str, parents, config: TableConfig) -> Node:
    Q, C = node_variables(data.schema, child, parents)
    joint = fit_table(data, Q, C, config)
    return Node(child, tuple(parents), joint, marginalize_out(joint, child))


def node_log_density(node: Node, data: Dataset, diagnostics: dict | None = None) -> np.ndarray:
    """Per-row conditional log density: joint table minus parent marginal."""
    joint = node.joint.log_density_rows(data)
    marg = node.parent_marginal.log_density_rows(data)
    low = (joint < LOG_DENSITY_FLOOR) | (marg < LOG_DENSITY_FLOOR)
    if np.any(low):
        if diagnostics is not None:
            diagnostics["clamped"] = diagnostics.get("clamped", 0) + int(low.sum())
        joint = np.maximum(joint, LOG_DENSITY_FLOOR)
        marg = np.maximum(marg, LOG_DENSITY_FLOOR)
    return joint - marg


class MixNet:
    """A fitted mix-net.  ``diagnostics['clamped']`` counts table log
    densities raised to the floor of -700 during evaluation."""

    def __init__(self, schema: Schema, structure: MixNetStructure, nodes: dict, config: dict | None = None, symbols=None):
        if tuple(schema.names) != structure.variables:
            raise StructureError("structure variables do not match the schema")
        for v in structure.variables:
            node = nodes[v]
            Q, C = node_variables(schema, v, structure.parents[v])
            if node.joint.discrete_vars != Q or node.joint.continuous_vars != C:
                raise StructureError(f"node {v!r} table variables do not match the structure")
            if set(node.parent_marginal.variables) != set(structure.parents[v]):
                raise StructureError(f"node {v!r} parent marginal is over the wrong variables")
        self.schema = schema
        self.structure = structure
        self.nodes = dict(nodes)
        self.config = dict(config or {})
        self.symbols = symbols
        self.diagnostics = {"clamped": 0}

    @property
    def arcs(self):
        return self.structure.arcs

    def node_param_counts(self) -> dict:
        return {v: n.param_count for v, n in self.nodes.items()}

    def conditional_param_count(self) -> int:
        """Joint-table parameters minus parent-marginal parameters, summed."""
        return sum(n.param_count - table_param_count(n.parent_marginal) for n in self.nodes.values())


def fit_parameters(structure: MixNetStructure, data: Dataset, config: TableConfig) -> MixNet:
    nodes = {v: fit_node(data, v, structure.parents[v], config) for v in structure.variables}
    return MixNet(data.schema, structure, nodes, symbols=data.symbols)


def _check_schema(net, data: Dataset):
    if data.schema != net.schema:
        raise StructureError(f"schema mismatch: data {data.schema.names} vs model {net.schema.names}")


def row_log_density(net: MixNet, data: Dataset, order=None) -> np.ndarray:
    _check_schema(net, data)
    out = np.zeros(data.n_rows)
    for v in order or net.structure.topological_order():
        out += node_log_density(net.nodes[v], data, net.diagnostics)
    return out


def log_likelihood(net: MixNet, data: Dataset, order=None) -> float:
    return float(row_log_density(net, data, order).sum())


def network_param_count(net: MixNet) -> int:
    return sum(n.param_count for n in net.nodes.values())


def network_bic(net: MixNet, data: Dataset) -> float:
    if data.n_rows == 0:
        raise ValueError("empty data")
    return log_likelihood(net, data) - 0.5 * math.log(data.n_rows) * network_param_count(net)


def anomaly_scores(net: MixNet, data: Dataset) -> np.ndarray:
    """Negative log-likelihood of each row; higher is more anomalous."""
    return -row_log_density(net, data)


def anomaly_score(net: MixNet, row) -> float:
    row = np.asarray(row, dtype=float).reshape(1, -1)
    return float(anomaly_scores(net, Dataset(net.schema, row, net.symbols or {}))[0])


def sample_network(net: MixNet, n: int, seed) -> Dataset:
    """Ancestral sampling in topological order."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    schema = net.schema
    values = np.zeros((n, len(schema)))
    for v in net.structure.topological_order():
        node = net.nodes[v]
        j = schema.index(v)
        joint = node.joint
        if n == 0:
            continue
        if schema[v].is_discrete:
            # P(v | parents) from the joint table evaluated at each value of v
            arity = schema.arity(v)
            Qidx = [schema.index(q) for q in joint.discrete_vars]
            Cvals = values[:, [schema.index(c) for c in joint.continuous_vars]]
            logp = np.empty((n, arity))
            for value in range(arity):
                Q = values[:, Qidx].copy()
                Q[:, joint.discrete_vars.index(v)] = value
                logp[:, value] = joint.log_density(Q, Cvals)
            p = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
            cum = np.cumsum(p, axis=1)
            u = rng.random(n)[:, None] * cum[:, -1:]
            values[:, j] = np.minimum((u > cum).sum(axis=1), arity - 1)
        else:
            cells = joint.cell_index(values[:, [schema.index(q) for q in joint.discrete_vars]])
            observed = [c for c in joint.continuous_vars if c != v]
            O = values[:, [schema.index(c) for c in observed]]
            for cell in np.unique(cells):
                rows = np.flatnonzero(cells == cell)
                mix = joint.mixtures[cell]
                draw = gmm.sample_conditional(mix, observed, O[rows], rng)
                values[rows, j] = draw[:, 0]
    return Dataset(schema, values, net.symbols or {})
