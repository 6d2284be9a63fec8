import json

import numpy as np
import pytest
from scipy.stats import kstest

from mixnet.dataset import Dataset, discretize_equal_frequency, preprocess
from mixnet.harness import (
    EvalReport,
    benchmark_dataset,
    fit_learner,
    format_table,
    prepare_fold,
    run_cv,
    synth_bucket_resample,
    synth_from_model,
)
from mixnet.modelio import model_to_json

from conftest import FAST_SEARCH, mixed_data


def test_report_arithmetic():
    rep = EvalReport(["a"], {"a": [1.0, 2.0, 3.0]}, [10, 10, 10])
    assert rep.mean("a") == 2.0
    assert rep.sem("a") == pytest.approx(0.57735, abs=1e-5)
    assert rep.sem("a") == pytest.approx(1 / np.sqrt(3), rel=1e-15)
    out = rep.to_json()["results"]["a"]
    assert out["fold_per_row"] == [0.1, 0.2, 0.3]


def test_run_cv_shape_and_determinism():
    data = mixed_data(200)
    learners = ["independent", "pseudo-discrete", "independent"]
    a = run_cv(data, learners, folds=10, seed=4, config=FAST_SEARCH)
    assert a.folds == 10 and all(len(a.fold_totals[l]) == 10 for l in a.learners)
    assert sum(a.fold_sizes) == 200
    assert a.mean("independent") == pytest.approx(np.mean(a.fold_totals["independent"]), abs=1e-12)
    b = run_cv(data, learners, folds=10, seed=4, config=FAST_SEARCH)
    assert a.dumps() == b.dumps()
    report = json.loads(a.dumps())
    assert report["learners"] == learners
    c = run_cv(data, ["independent"], folds=10, seed=5, config=FAST_SEARCH)
    assert c.fold_totals["independent"] != a.fold_totals["independent"]


def test_run_cv_parallel_matches_serial():
    data = mixed_data(120)
    a = run_cv(data, ["independent", "tree"], folds=3, seed=1, config=FAST_SEARCH, workers=1)
    b = run_cv(data, ["independent", "tree"], folds=3, seed=1, config=FAST_SEARCH, workers=2)
    assert a.dumps() == b.dumps()


def test_run_cv_rejects_bad_input():
    with pytest.raises(ValueError):
        run_cv(mixed_data(50), ["nope"], folds=2)
    with pytest.raises(ValueError):
        run_cv(mixed_data(50), ["independent"], folds=1)


def test_no_test_set_leakage():
    data = preprocess(mixed_data(300))
    test_rows = np.arange(0, 300, 10)
    perturbed = np.array(data.values)
    perturbed[test_rows, :2] = np.random.default_rng(0).uniform(-5, 5, (test_rows.size, 2))
    train_a, _ = prepare_fold(data, test_rows)
    train_b, test_b = prepare_fold(data.with_values(perturbed), test_rows)
    np.testing.assert_array_equal(train_a.values, train_b.values)
    # test rows are clamped into the train-fold range
    assert test_b.values[:, :2].min() >= 0 and test_b.values[:, :2].max() <= 1
    for name in ("tree", "pseudo-discrete"):
        a = fit_learner(name, train_a, FAST_SEARCH, 3)
        b = fit_learner(name, train_b, FAST_SEARCH, 3)
        assert json.dumps(model_to_json(a)) == json.dumps(model_to_json(b))


def test_format_table_layout():
    r1 = EvalReport(["mixnet", "tree"], {"mixnet": [10.0, 12.0], "tree": [8.0, 9.0]}, [5, 5])
    r2 = EvalReport(["mixnet"], {"mixnet": [1.0, 1.0]}, [5, 5])
    text = format_table({"bench": r1, "other": r2})
    lines = text.splitlines()
    assert lines[0].split() == ["bench", "other"]
    assert lines[1].startswith("Mix-Net") and "11.0 +/- 1.0" in lines[1] and "1.0 +/- 0.0" in lines[1]
    assert lines[2].startswith("Tree") and lines[2].rstrip().endswith("-")


def test_synth_bucket_resample():
    data = preprocess(mixed_data(2000))
    out = synth_bucket_resample(data, 16, 7)
    dmap, before = discretize_equal_frequency(data, 16)
    _, after = discretize_equal_frequency(out, 16, dmap)
    np.testing.assert_array_equal(before.values, after.values)
    np.testing.assert_array_equal(out.column("d"), data.column("d"))
    for name in data.schema.continuous():
        edges = dmap.edges(name)
        b = before.column(name).astype(int)
        x = out.column(name)
        assert np.all((x >= edges[b]) & (x <= edges[b + 1]))
        # uniform inside a bucket
        k = int(np.bincount(b).argmax())
        lo, hi = edges[k], edges[k + 1]
        assert kstest((x[b == k] - lo) / (hi - lo), "uniform").pvalue > 1e-3
    again = synth_bucket_resample(data, 16, 7)
    np.testing.assert_array_equal(again.values, out.values)


def test_synth_from_model():
    data = preprocess(mixed_data(400))
    inner = data.with_values(np.column_stack([0.25 + 0.5 * data.values[:, :2], data.values[:, 2]]))
    net = fit_learner("independent", inner, FAST_SEARCH, 0)
    out = synth_from_model(net, 12_671, 3)
    assert out.n_rows == 12_671 and out.schema == net.schema
    assert out.meta["clamped"] == 0
    wide = fit_learner("independent", data, FAST_SEARCH, 0)
    out = synth_from_model(wide, 5000, 3)
    cont = out.values[:, :2]
    assert cont.min() >= 0 and cont.max() <= 1


def test_benchmark_dataset_shape():
    data = benchmark_dataset(500, seed=1)
    assert data.values.shape == (500, 8)
    assert data.schema.continuous() == [f"x{i}" for i in range(1, 7)]
    assert data.schema.discrete() == ["d1", "d2"]
    np.testing.assert_array_equal(benchmark_dataset(50, 2).values, benchmark_dataset(50, 2).values)
    assert isinstance(data, Dataset)
