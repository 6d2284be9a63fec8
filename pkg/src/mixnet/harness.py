"""Cross-validated comparison of the learners and the two synthetic
dataset constructions."""

from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines
from .dataset import Dataset, add_noise, cv_folds, discretize_equal_frequency, fit_scaling
from .gmm import derive_seed
from .network import MixNet, log_likelihood, sample_network
from .structure import SearchConfig

LEARNERS = {
    "mixnet": baselines.fit_mixnet,
    "independent": baselines.fit_independent,
    "tree": baselines.fit_tree,
    "single-gaussian": baselines.fit_single_gaussian_net,
    "pseudo-discrete": lambda data, config, seed: baselines.fit_pseudo_discrete(data, baselines.F_GRID, config, seed),
}

DISPLAY_NAMES = {
    "independent": "Independent Mixtures",
    "single-gaussian": "Single-Gaussian Mixtures",
    "pseudo-discrete": "Pseudo-Discrete",
    "tree": "Tree",
    "mixnet": "Mix-Net",
}


def fit_learner(name: str, data: Dataset, config: SearchConfig, seed: int):
    if name not in LEARNERS:
        raise ValueError(f"unknown learner {name!r}; choose from {sorted(LEARNERS)}")
    em = config.table.em.replace(seed=seed)
    config = config.replace(table=config.table.replace(em=em))
    return LEARNERS[name](data, config, seed)


def model_log_likelihood(model, data: Dataset) -> float:
    if isinstance(model, baselines.PseudoDiscreteNet):
        return baselines.pseudo_discrete_log_likelihood(model, data)
    return log_likelihood(model, data)


def model_row_log_density(model, data: Dataset) -> np.ndarray:
    from .network import row_log_density

    if isinstance(model, baselines.PseudoDiscreteNet):
        return baselines.pseudo_discrete_row_log_density(model, data)
    return row_log_density(model, data)


@dataclass
class EvalReport:
    learners: list
    fold_totals: dict
    fold_sizes: list
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    @property
    def folds(self) -> int:
        return len(self.fold_sizes)

    def mean(self, learner: str) -> float:
        return float(np.mean(self.fold_totals[learner]))

    def std(self, learner: str) -> float:
        v = np.asarray(self.fold_totals[learner])
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    def sem(self, learner: str) -> float:
        """Standard deviation of the fold values divided by sqrt(folds)."""
        return self.std(learner) / math.sqrt(self.folds)

    def per_row(self, learner: str) -> list:
        return [t / n for t, n in zip(self.fold_totals[learner], self.fold_sizes)]

    def to_json(self) -> dict:
        return {
            "format": "mixnet-report-1",
            "learners": list(self.learners),
            "folds": self.folds,
            "fold_sizes": list(self.fold_sizes),
            "results": {
                name: {
                    "fold_totals": list(self.fold_totals[name]),
                    "fold_per_row": self.per_row(name),
                    "mean": self.mean(name),
                    "stddev_of_mean": self.sem(name),
                    "stddev_of_folds": self.std(name),
                }
                for name in self.learners
            },
            "stddev_convention": "stddev_of_mean = stddev(fold totals, ddof=1) / sqrt(folds)",
            "config": self.config,
            "seeds": self.seeds,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)


def format_table(reports: dict) -> str:
    """Aligned text table: learner rows, one "mean +/- sem" column per dataset."""
    datasets = list(reports)
    learners = []
    for rep in reports.values():
        learners += [l for l in rep.learners if l not in learners]
    cells = [[""] + datasets]
    for l in learners:
        row = [DISPLAY_NAMES.get(l, l)]
        for ds in datasets:
            rep = reports[ds]
            row.append(f"{rep.mean(l):.1f} +/- {rep.sem(l):.1f}" if l in rep.fold_totals else "-")
        cells.append(row)
    widths = [max(len(r[c]) for r in cells) for c in range(len(cells[0]))]
    lines = ["  ".join(s.ljust(w) if c == 0 else s.rjust(w) for c, (s, w) in enumerate(zip(r, widths))) for r in cells]
    return "\n".join(l.rstrip() for l in lines) + "\n"


def prepare_fold(data: Dataset, test_rows: np.ndarray):
    """Train/test split with [0, 1] scaling fitted on the training rows only."""
    mask = np.ones(data.n_rows, dtype=bool)
    mask[test_rows] = False
    train, test = data.take(np.flatnonzero(mask)), data.take(test_rows)
    scaling = fit_scaling(train)
    return scaling.apply(train, clamp=False), scaling.apply(test, clamp=True)


def _run_fold(args):
    data, test_rows, fold, learners, config, seed = args
    train, test = prepare_fold(data, test_rows)
    out = {}
    for name in learners:
        s = derive_seed(seed, fold, name)
        model = fit_learner(name, train, config, s)
        out[name] = (model_log_likelihood(model, test), s)
    return out


def default_workers() -> int:
    env = os.environ.get("MIXNET_THREADS")
    if env:
        return max(1, int(env))
    return 1


def run_cv(
    data: Dataset,
    learners,
    folds: int = 10,
    seed: int = 0,
    config: SearchConfig | None = None,
    noise: float = 1e-6,
    workers: int | None = None,
) -> EvalReport:
    """k-fold CV; each learner's summed test log-likelihood per fold.

    Noise (relative to each column's range) is added once up front; scaling,
    discretization and all fitting then see only the training fold.
    """
    config = config or SearchConfig()
    learners = list(learners)
    for name in learners:
        if name not in LEARNERS:
            raise ValueError(f"unknown learner {name!r}")
    if noise > 0:
        data = add_noise(data, noise, derive_seed(seed, "noise"), relative=True)
    blocks = cv_folds(data.n_rows, folds, seed)
    unique = list(dict.fromkeys(learners))
    jobs = [(data, rows, i, unique, config, seed) for i, rows in enumerate(blocks)]
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_fold, jobs))
    else:
        results = [_run_fold(j) for j in jobs]
    totals = {name: [r[name][0] for r in results] for name in unique}
    seeds = {name: [r[name][1] for r in results] for name in unique}
    return EvalReport(
        learners=learners,
        fold_totals=totals,
        fold_sizes=[int(b.size) for b in blocks],
        config={**_plain_config(config), "noise": noise, "folds": folds},
        seeds={"seed": seed, "per_fold": seeds},
    )


def _plain_config(config: SearchConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(config)))


def synth_bucket_resample(data: Dataset, F: int, seed: int) -> Dataset:
    """Replace each continuous value by a uniform draw from its
    equal-frequency bucket (data must already lie in [0, 1])."""
    dmap, discrete = discretize_equal_frequency(data, F)
    rng = np.random.default_rng(seed)
    values = np.array(data.values)
    for name in data.schema.continuous():
        j = data.schema.index(name)
        b = discrete.values[:, j].astype(int)
        edges = dmap.edges(name)
        values[:, j] = rng.uniform(edges[b], edges[b + 1])
    return data.with_values(values, synth_bucket_F=F)


def synth_from_model(net: MixNet, n: int, seed: int) -> Dataset:
    """Ancestral samples with continuous values clamped to [0, 1]."""
    sampled = sample_network(net, n, seed)
    values = np.array(sampled.values)
    clamped = 0
    for name in sampled.schema.continuous():
        j = sampled.schema.index(name)
        outside = (values[:, j] < 0.0) | (values[:, j] > 1.0)
        clamped += int(outside.sum())
        values[:, j] = np.clip(values[:, j], 0.0, 1.0)
    return sampled.with_values(values, clamped=clamped)


def benchmark_dataset(n: int = 5000, seed: int = 0) -> Dataset:
    """Seeded 8-variable mixed benchmark.

    Six continuous variables: two bimodal pairs (``x1, x2`` and a parabola
    ``x3, x4``) and a three-way linear dependency among ``x2, x5, x6``;
    binary ``d1`` and ``d2`` shift the means of ``x1`` and ``x4``.
    """
    from .dataset import Column, Schema

    rng = np.random.default_rng(seed)
    d1 = rng.random(n) < 0.5
    d2 = rng.random(n) < 0.4
    s = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    x1 = 1.5 * s + 1.0 * d1 + rng.normal(0, 0.4, n)
    x2 = -1.5 * s + rng.normal(0, 0.4, n)
    t = np.where(rng.random(n) < 0.5, -1.2, 1.2) + rng.normal(0, 0.35, n)
    x3 = t
    x4 = 0.8 * t**2 + 1.0 * d2 + rng.normal(0, 0.25, n)
    x5 = 0.6 * x2 + rng.normal(0, 1.0, n)
    x6 = x5 + x2 + rng.normal(0, 0.2, n)
    schema = Schema(
        tuple(Column(f"x{i}", "continuous") for i in range(1, 7))
        + (Column("d1", "discrete", 2), Column("d2", "discrete", 2))
    )
    values = np.column_stack([x1, x2, x3, x4, x5, x6, d1, d2]).astype(float)
    return Dataset(schema, values)
