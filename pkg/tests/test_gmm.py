import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid

from oracles import direct_mixture_density, random_mixture

from mixnet import gmm
from mixnet.gmm import EmConfig, GaussianMixture, bic, combine, condition, em_fit, em_trace, log_density, marginalize, param_count, sample, select_mixture


def gm2d():
    return GaussianMixture(
        ("a", "b"),
        [0.35, 0.65],
        [[0.2, 0.5], [0.7, 0.4]],
        [[[0.02, 0.006], [0.006, 0.03]], [[0.05, -0.01], [-0.01, 0.015]]],
    )


def grid_integral_1d(gm, lo=-10.0, hi=11.0):
    # dense where the [0, 1]-fitted mass lives, coarse in the tails
    parts = [np.linspace(lo, -1, 2001), np.linspace(-1, 2, 30001), np.linspace(2, hi, 2001)]
    return sum(trapezoid(np.exp(log_density(gm, x[:, None])), x) for x in parts)


def grid_integral_2d(gm, n=1201):
    x = np.linspace(-1, 2, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    dens = np.exp(log_density(gm, np.column_stack([X.ravel(), Y.ravel()]))).reshape(n, n)
    return trapezoid(trapezoid(dens, x, axis=1), x)


# -- density ---------------------------------------------------------------


def test_standard_normal_peak():
    gm = GaussianMixture(("x",), [1.0], [[0.0]], [[[1.0]]])
    assert log_density(gm, [0.0]) == pytest.approx(-0.9189385332, abs=1e-10)
    assert math.exp(log_density(gm, [0.0])) == pytest.approx(0.3989422804, abs=1e-10)


def test_identical_components_collapse():
    one = GaussianMixture(("x", "y"), [1.0], [[0.1, 0.2]], [[[0.3, 0.1], [0.1, 0.2]]])
    two = GaussianMixture(("x", "y"), [0.3, 0.7], [[0.1, 0.2]] * 2, [[[0.3, 0.1], [0.1, 0.2]]] * 2)
    X = np.random.default_rng(0).normal(size=(30, 2))
    np.testing.assert_allclose(log_density(two, X), log_density(one, X), rtol=1e-13)


def test_density_matches_direct_formula_on_grid():
    gm = gm2d()
    g = np.linspace(0, 1, 5)
    pts = np.array([[a, b] for a in g for b in g])
    got = np.exp(log_density(gm, pts))
    want = np.array([direct_mixture_density(gm, p) for p in pts])
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_zero_dimensional_density():
    u = gmm.unit_mixture()
    assert log_density(u, np.zeros(0)) == 0.0
    assert param_count(GaussianMixture((), [0.2, 0.3, 0.5], np.zeros((3, 0)), np.zeros((3, 0, 0)))) == 2


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        log_density(gm2d(), [0.1, 0.2, 0.3])


def test_far_tail_is_finite():
    gm = GaussianMixture(("x",), [0.5, 0.5], [[0.0], [1.0]], [[[1e-6]], [[1e-6]]])
    assert np.isfinite(log_density(gm, [0.5]))


# -- parameter counting and BIC -------------------------------------------


@pytest.mark.parametrize("M,d,expected", [(1, 1, 2), (2, 2, 11), (3, 0, 2)])
def test_param_count(M, d, expected):
    gm = GaussianMixture(tuple(f"v{j}" for j in range(d)), np.full(M, 1 / M), np.zeros((M, d)), np.tile(np.eye(d), (M, 1, 1)))
    assert param_count(gm) == expected


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 5))
def test_param_count_matches_serialized_entries(M, d):
    gm = random_mixture(np.random.default_rng(M * 10 + d), M, d)
    js = gm.to_json()
    n = len(js["weights"]) + sum(len(m) for m in js["means"]) + sum(len(c) for c in js["cov_tril"])
    assert param_count(gm) == n - 1


def test_bic_penalty_and_duplication():
    gm = gm2d()
    X = np.random.default_rng(3).uniform(0, 1, (100, 2))
    ll = log_density(gm, X).sum()
    assert ll - bic(gm, X) == pytest.approx(0.5 * math.log(100) * 11, abs=1e-9)
    assert 0.5 * math.log(100) * 11 == pytest.approx(25.3284360229, abs=1e-9)
    assert bic(gm, X[:1]) == pytest.approx(log_density(gm, X[0]), abs=1e-12)
    X2 = np.vstack([X, X])
    assert bic(gm, X2) == pytest.approx(2 * ll - 0.5 * math.log(200) * 11, rel=1e-12)


# -- EM --------------------------------------------------------------------


def test_single_component_is_closed_form():
    X = np.random.default_rng(0).normal(size=(200, 3)) @ np.array([[1, 0.5, 0], [0, 1, 0.2], [0, 0, 0.3]])
    gm = em_fit(X, 1, EmConfig())
    np.testing.assert_allclose(gm.means[0], X.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(gm.covs[0], np.cov(X.T, bias=True), rtol=1e-10)
    assert gm.weights.tolist() == [1.0]
    assert len(em_trace(X, 1, EmConfig(), seed=0).log_likelihoods) == 1


def test_covariance_floor_on_point_mass():
    X = np.full((30, 2), 0.4)
    gm = em_fit(X, 1, EmConfig(cov_floor=1e-6))
    assert np.linalg.eigvalsh(gm.covs[0]).min() >= 1e-6 * (1 - 1e-9)


def test_recovers_two_component_mixture():
    rng = np.random.default_rng(2024)
    true = GaussianMixture(("x",), [0.5, 0.5], [[0.25], [0.75]], [[[0.0025]], [[0.0025]]])
    train = sample(true, 5000, rng)
    test = sample(true, 5000, rng)
    fit = em_fit(train, 2, EmConfig(seed=1))
    gap = abs(log_density(fit, test).mean() - log_density(true, test).mean())
    assert gap < 0.02


@pytest.mark.parametrize("seed", range(8))
def test_em_monotone(seed):
    rng = np.random.default_rng(seed)
    gm = random_mixture(rng, 3, 2)
    X = sample(gm, 600, rng)
    t = em_trace(X, 4, EmConfig(max_iterations=150), seed=seed)
    ll = np.asarray(t.log_likelihoods)
    # restart the comparison after a component drop
    starts = [0] + [i for i in t.drop_iterations]
    for a, b in zip(starts, starts[1:] + [ll.size]):
        seg = ll[a:b]
        assert np.all(np.diff(seg) >= -1e-9 * np.abs(seg[:-1]))


def test_em_deterministic_and_m_too_large():
    X = np.random.default_rng(0).random((50, 2))
    a = em_fit(X, 3, EmConfig(seed=5))
    b = em_fit(X, 3, EmConfig(seed=5))
    assert a.same_parameters(b)
    with pytest.raises(ValueError):
        em_fit(X[:2], 3, EmConfig())
    with pytest.raises(ValueError, match="empty"):
        em_fit(np.zeros((0, 2)), 1, EmConfig())


def test_component_drop_keeps_valid_mixture():
    # a far-away init component gets no responsibility and is dropped
    X = np.random.default_rng(1).normal(0.5, 0.05, (200, 1))
    init = GaussianMixture(("x",), [0.5, 0.5], [[0.5], [50.0]], [[[0.01]], [[0.01]]])
    t = em_trace(X, 2, EmConfig(), seed=0, init=init)
    assert t.mixture.n_components == 1 and t.drop_iterations


def test_select_single_gaussian():
    X = np.random.default_rng(77).normal(0.5, 0.1, (10_000, 1))
    gm = select_mixture(X, EmConfig(component_grid=(1, 2, 3)))
    assert gm.n_components == 1


def test_select_filters_grid_by_rows(monkeypatch):
    tried = []
    real = gmm.em_fit

    def spy(X, M, config, **kw):
        tried.append(M)
        return real(X, M, config, **kw)

    monkeypatch.setattr(gmm, "em_fit", spy)
    select_mixture(np.array([[0.1], [0.9]]), EmConfig(component_grid=(1, 2, 4)))
    assert tried == [1, 2]


def test_select_single_candidate():
    rng = np.random.default_rng(0)
    X = np.concatenate([rng.normal(c, 0.02, 100) for c in (0.1, 0.5, 0.9)])[:, None]
    assert select_mixture(X, EmConfig(component_grid=(3,))).n_components == 3


def test_fitted_densities_normalize():
    rng = np.random.default_rng(11)
    X1 = np.concatenate([rng.normal(0.3, 0.05, 300), rng.normal(0.7, 0.1, 300)])[:, None]
    g1 = select_mixture(X1, EmConfig(component_grid=(1, 2, 3)))
    assert abs(grid_integral_1d(g1) - 1) < 1e-4
    X2 = sample(gm2d(), 500, rng)
    g2 = select_mixture(X2, EmConfig(component_grid=(1, 2, 3)))
    assert abs(grid_integral_2d(g2) - 1) < 1e-4


# -- exact operations ------------------------------------------------------


def test_marginalize_diagonal():
    gm = GaussianMixture(("a", "b"), [1.0], [[0.3, 0.6]], [[[0.04, 0], [0, 0.09]]])
    m = marginalize(gm, {"a"})
    assert m.variables == ("a",) and m.covs[0, 0, 0] == 0.04
    x = np.linspace(-1, 2, 13)[:, None]
    closed = -0.5 * math.log(2 * math.pi * 0.04) - (x[:, 0] - 0.3) ** 2 / 0.08
    np.testing.assert_allclose(log_density(m, x), closed, rtol=1e-13)


def test_marginalize_matches_quadrature():
    gm = GaussianMixture(("a", "b"), [1.0], [[0.1, -0.2]], [[[1.0, 0.6], [0.6, 0.8]]])
    s2 = math.sqrt(0.8)
    x2 = np.linspace(-0.2 - 6 * s2, -0.2 + 6 * s2, 2001)
    m = marginalize(gm, ["a"])
    for x1 in np.linspace(-2, 2, 11):
        pts = np.column_stack([np.full_like(x2, x1), x2])
        q = trapezoid(np.exp(log_density(gm, pts)), x2)
        assert q == pytest.approx(math.exp(log_density(m, [x1])), abs=1e-6)


def test_marginalize_identity_empty_and_commutes():
    gm = random_mixture(np.random.default_rng(4), 3, 3, ("a", "b", "c"))
    assert marginalize(gm, gm.variables) is gm
    assert marginalize(gm, []).dim == 0
    assert marginalize(marginalize(gm, {"a", "b"}), {"a"}).same_parameters(marginalize(gm, {"a"}))
    with pytest.raises(KeyError):
        marginalize(gm, ["z"])


def test_condition_textbook():
    gm = GaussianMixture(("a", "b"), [1.0], [[0.0, 0.0]], [[[1.0, 0.5], [0.5, 1.0]]])
    c = condition(gm, {"b": 1.0})
    assert c.means[0, 0] == pytest.approx(0.5, abs=1e-14)
    assert c.covs[0, 0, 0] == pytest.approx(0.75, abs=1e-14)
    ind = GaussianMixture(("a", "b"), [1.0], [[0.2, 0.4]], [[[0.3, 0.0], [0.0, 0.5]]])
    assert condition(ind, {"b": 3.0}).same_parameters(marginalize(ind, ["a"]))


def test_condition_ratio_identity():
    rng = np.random.default_rng(8)
    gm = random_mixture(rng, 3, 2, ("u", "o"))
    marg = marginalize(gm, ["o"])
    for _ in range(20):
        u, o = rng.uniform(0, 1, 2)
        lhs = log_density(condition(gm, {"o": o}), [u])
        rhs = log_density(gm, [u, o]) - log_density(marg, [o])
        assert math.exp(lhs) == pytest.approx(math.exp(rhs), rel=1e-10)


def test_condition_all_observed_and_impossible():
    gm = gm2d()
    assert condition(gm, {"a": 0.1, "b": 0.2}).dim == 0
    tight = GaussianMixture(("a", "b"), [1.0], [[0.0, 0.0]], [[[1e-6, 0], [0, 1e-6]]])
    with pytest.raises(ValueError, match="impossible evidence"):
        condition(tight, {"b": 1e6})


def test_combine():
    g = gm2d()
    assert combine([g], [1.0]).same_parameters(g)
    n0 = GaussianMixture(("x",), [1.0], [[0.0]], [[[1.0]]])
    n1 = GaussianMixture(("x",), [1.0], [[1.0]], [[[1.0]]])
    c = combine([n0, n1], [0.6, 0.4])
    exact = 0.6 / math.sqrt(2 * math.pi) + 0.4 * math.exp(-0.5) / math.sqrt(2 * math.pi)
    assert math.exp(log_density(c, [0.0])) == pytest.approx(exact, rel=1e-14)
    # the rounded hand value 0.6*0.39894 + 0.4*0.24197
    assert math.exp(log_density(c, [0.0])) == pytest.approx(0.3361546, abs=1e-6)
    rng = np.random.default_rng(0)
    parts = [random_mixture(rng, m, 2) for m in (1, 2, 3)]
    w = rng.dirichlet(np.ones(3))
    mix = combine(parts, w)
    X = rng.uniform(0, 1, (50, 2))
    want = sum(wj * np.exp(log_density(p, X)) for wj, p in zip(w, parts))
    np.testing.assert_allclose(np.exp(log_density(mix, X)), want, rtol=1e-12)
    with pytest.raises(ValueError, match="mismatch"):
        combine([n0, g], [0.5, 0.5])


def test_combine_drops_negligible_weights():
    n0 = GaussianMixture(("x",), [1.0], [[0.0]], [[[1.0]]])
    n1 = GaussianMixture(("x",), [1.0], [[1.0]], [[[1.0]]])
    assert combine([n0, n1], [1.0, 0.0]).n_components == 1


def test_sample_basics():
    g = GaussianMixture(("x",), [1.0], [[0.5]], [[[0.01]]])
    assert sample(g, 0, 0).shape == (0, 1)
    x = sample(g, 100_000, 3)
    assert abs(x.mean() - 0.5) < 0.002
    np.testing.assert_array_equal(sample(gm2d(), 20, 9), sample(gm2d(), 20, 9))


def test_sample_conditional_matches_condition():
    gm = random_mixture(np.random.default_rng(6), 2, 2, ("u", "o"))
    O = np.full((20_000, 1), 0.6)
    draws = gmm.sample_conditional(gm, ["o"], O, np.random.default_rng(0))
    c = condition(gm, {"o": 0.6})
    mean = float(c.weights @ c.means[:, 0])
    var = float(c.weights @ (c.covs[:, 0, 0] + c.means[:, 0] ** 2)) - mean**2
    assert abs(draws.mean() - mean) < 6 * math.sqrt(var / O.shape[0])


def test_json_roundtrip_bit_exact():
    gm = random_mixture(np.random.default_rng(1), 3, 3)
    back = GaussianMixture.from_json(gm.to_json())
    assert back.same_parameters(gm)
