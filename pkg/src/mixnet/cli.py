"""Command-line interface: ``mixnet {fit,score,eval,sample,synth-bucket,synth-model,importance}``.

Exit status is 0 on success, 1 on data/runtime errors and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from . import baselines
from .dataset import DataError, Dataset, Schema, add_noise, encode_with_symbols, fit_scaling, load_dataset, write_csv
from .gmm import EmConfig, derive_seed
from .harness import LEARNERS, fit_learner, format_table, model_row_log_density, run_cv, synth_bucket_resample, synth_from_model
from .mixtable import TableConfig
from .modelio import atomic_write_text, load_model, save_model
from .network import MixNet, StructureError, network_param_count, sample_network
from .structure import SearchConfig, importance_matrix


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from None


def _add_config_flags(p):
    g = p.add_argument_group("model configuration")
    g.add_argument("--maxpars", type=int, default=3)
    g.add_argument("--k", type=int, default=6)
    g.add_argument("--pseudocount", type=float, default=0.5)
    g.add_argument("--min-cell-rows", type=int, default=10)
    g.add_argument("--cov-floor", type=float, default=1e-6)
    g.add_argument("--components", type=_int_list, default=(1, 2, 3, 5, 8, 12, 20), help="component-count grid, e.g. 1,2,3,5")
    g.add_argument("--restarts", type=int, default=3)
    g.add_argument("--max-iter", type=int, default=200)
    g.add_argument("--rel-tol", type=float, default=1e-7)
    g.add_argument("--subsample-cap", type=int, default=10_000)
    g.add_argument("--importance-bins", type=int, default=16)
    g.add_argument("--continuous-importance", action="store_true", help="compute importances on real-valued data")
    g.add_argument("--asymmetric", action="store_true", help="fit both arc directions for importances")
    g.add_argument("--noise", type=float, default=1e-6, help="uniform noise amplitude, as a fraction of each column's range")


def _config(args) -> SearchConfig:
    em = EmConfig(
        max_iterations=args.max_iter,
        rel_tol=args.rel_tol,
        restarts=args.restarts,
        cov_floor=args.cov_floor,
        component_grid=args.components,
        seed=args.seed,
    )
    table = TableConfig(pseudocount=args.pseudocount, min_cell_rows=args.min_cell_rows, em=em)
    return SearchConfig(
        maxpars=args.maxpars,
        K=args.k,
        assume_symmetric=not args.asymmetric,
        importance_bins=args.importance_bins,
        importance_mode="continuous" if args.continuous_importance else "discretized",
        subsample_cap=args.subsample_cap,
        table=table,
    )


def _load(args) -> Dataset:
    return load_dataset(args.data, Schema.load(args.schema))


def _scaled(data: Dataset, noise: float, seed: int):
    noisy = add_noise(data, noise, derive_seed(seed, "noise"), relative=True) if noise > 0 else data
    scaling = fit_scaling(noisy)
    return scaling, scaling.apply(noisy, clamp=False)


def _bic(model, data) -> float:
    if isinstance(model, baselines.PseudoDiscreteNet):
        return baselines.pseudo_discrete_bic(model, data)
    from .network import network_bic

    return network_bic(model, data)


def cmd_fit(args) -> int:
    raw = _load(args)
    config = _config(args)
    scaling, train = _scaled(raw, args.noise, args.seed)
    model = fit_learner(args.learner, train, config, args.seed)
    scored = scaling.apply(raw, clamp=True)
    ll = float(model_row_log_density(model, scored).sum())
    bic = _bic(model, scored)
    if isinstance(model, MixNet):
        counts = model.node_param_counts()
        extra = {"node_param_counts": counts, "param_count": network_param_count(model), "conditional_param_count": model.conditional_param_count()}
    else:
        counts = {v: c.n_configs * (c.arity - 1) for v, c in model.cpts.items()}
        extra = {"node_param_counts": counts, "param_count": model.param_count()}
    metadata = {
        "learner": args.learner,
        "seed": args.seed,
        "noise": args.noise,
        "config": json.loads(json.dumps(dataclasses.asdict(config))),
        "train_log_likelihood": ll,
        "train_bic": bic,
        **extra,
    }
    save_model(model, args.out, scaling=scaling, metadata=metadata)
    print(f"learner\t{args.learner}")
    print(f"log_likelihood\t{ll!r}")
    print(f"bic\t{float(bic)!r}")
    print("arcs")
    for p, c in model.arcs:
        print(f"  {p} -> {c}")
    print("node_param_counts")
    for v, c in counts.items():
        print(f"  {v}\t{c}")
    if args.arcs:
        atomic_write_text(args.arcs, "".join(f"{p}\t{c}\n" for p, c in model.arcs))
    return 0


def _load_scored(args):
    model, scaling, meta = load_model(args.model)
    data = encode_with_symbols(args.data, model.schema, model.symbols or {})
    if scaling is not None:
        data = scaling.apply(data, clamp=True)
    return model, data


def cmd_score(args) -> int:
    model, data = _load_scored(args)
    rows = model_row_log_density(model, data)
    if args.anomaly:
        order = sorted(range(rows.size), key=lambda i: (rows[i], i))
        print("row\tanomaly_score")
        for i in order:
            print(f"{i}\t{float(-rows[i])!r}")
        return 0
    print(f"log_likelihood\t{float(rows.sum())!r}")
    print(f"rows\t{rows.size}")
    print("row\tlog_likelihood")
    for i, r in enumerate(rows):
        print(f"{i}\t{float(r)!r}")
    return 0


def cmd_eval(args) -> int:
    data = _load(args)
    config = _config(args)
    report = run_cv(data, args.learners, folds=args.folds, seed=args.seed, config=config, noise=args.noise)
    table = format_table({args.name: report})
    if args.out:
        atomic_write_text(args.out, report.dumps())
    if args.table:
        atomic_write_text(args.table, table)
    print(table, end="")
    return 0


def _unscale(data: Dataset, scaling) -> Dataset:
    if scaling is None:
        return data
    values = np.array(data.values)
    for name in scaling.lo:
        j = data.schema.index(name)
        values[:, j] = scaling.lo[name] + values[:, j] * scaling.span[name] if scaling.span[name] > 0 else scaling.lo[name]
    return data.with_values(values)


def _mixnet_model(path):
    model, scaling, _ = load_model(path)
    if not isinstance(model, MixNet):
        raise DataError("sampling needs a mix-net model file")
    return model, scaling


def cmd_sample(args) -> int:
    model, scaling = _mixnet_model(args.model)
    out = _unscale(sample_network(model, args.n, args.seed), scaling)
    write_csv(out, args.out)
    print(f"wrote {args.n} rows to {args.out}")
    return 0


def cmd_synth_model(args) -> int:
    model, _ = _mixnet_model(args.model)
    out = synth_from_model(model, args.n, args.seed)
    write_csv(out, args.out)
    print(f"wrote {args.n} rows to {args.out} (clamped cells: {out.meta['clamped']})")
    return 0


def cmd_synth_bucket(args) -> int:
    raw = _load(args)
    _, data = _scaled(raw, args.noise, args.seed)
    out = synth_bucket_resample(data, args.f, derive_seed(args.seed, "resample"))
    write_csv(out, args.out)
    print(f"wrote {out.n_rows} rows to {args.out}")
    return 0


def cmd_importance(args) -> int:
    raw = _load(args)
    _, data = _scaled(raw, args.noise, args.seed)
    imp = importance_matrix(data, _config(args))
    imp.to_csv(args.out)
    print(f"wrote {len(imp.variables)}x{len(imp.variables)} importance matrix ({imp.provenance}, {imp.n_pair_fits} pair fits) to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixnet", description="Learn and use mix-net density models.")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help, data=True, config=False):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, required=True)
        if data:
            p.add_argument("--data", required=True)
            p.add_argument("--schema", required=True)
        if config:
            _add_config_flags(p)
        p.set_defaults(func=func)
        return p

    p = command("fit", cmd_fit, "fit a model and write it as JSON", config=True)
    p.add_argument("--learner", required=True, choices=sorted(LEARNERS))
    p.add_argument("--out", required=True)
    p.add_argument("--arcs", help="also write the arc list to this file")

    p = sub.add_parser("score", help="log-likelihood or anomaly scores of a CSV under a model")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--anomaly", action="store_true", help="print per-row anomaly scores, most anomalous first")
    p.set_defaults(func=cmd_score)

    p = command("eval", cmd_eval, "cross-validated comparison of learners", config=True)
    p.add_argument("--learners", type=lambda s: [t for t in s.split(",") if t], default=["mixnet", "tree", "independent"])
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--name", default="data", help="column heading for the text table")
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--table", help="text table path")

    for name, func, help in (
        ("sample", cmd_sample, "ancestral samples in original units"),
        ("synth-model", cmd_synth_model, "ancestral samples clamped to [0, 1]"),
    ):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--n", type=int, required=True)
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)

    p = command("synth-bucket", cmd_synth_bucket, "resample each value uniformly within its equal-frequency bucket")
    p.add_argument("--f", type=int, default=16)
    p.add_argument("--noise", type=float, default=1e-6)
    p.add_argument("--out", required=True)

    p = command("importance", cmd_importance, "export the pairwise importance matrix as CSV", config=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "learners", None):
        unknown = [l for l in args.learners if l not in LEARNERS]
        if unknown:
            parser.error(f"unknown learner(s): {', '.join(unknown)}")
    try:
        return args.func(args)
    except (DataError, StructureError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
