"""Full-covariance Gaussian mixtures: density, EM, BIC selection, and the
exact operations (marginalize, condition, combine) needed by mixture tables.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from ._kernels import e_step, m_step

LOG_2PI = math.log(2.0 * math.pi)
LOG_TINY = math.log(5e-324)


def derive_seed(*parts) -> int:
    """Stable integer seed from ints and strings (independent of PYTHONHASHSEED)."""
    entropy = [p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence([e & 0xFFFFFFFF for e in entropy]).generate_state(1)[0])


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 200
    rel_tol: float = 1e-7
    restarts: int = 3
    cov_floor: float = 1e-6
    component_grid: tuple = (1, 2, 3, 5, 8, 12, 20)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "component_grid", tuple(int(m) for m in self.component_grid))
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        g = self.component_grid
        if not g or any(m < 1 for m in g) or list(g) != sorted(set(g)):
            raise ValueError("component_grid must be a non-empty ascending list of positive ints")

    def replace(self, **kw) -> "EmConfig":
        return EmConfig(**{**self.__dict__, **kw})


class GaussianMixture:
    """Weights ``(M,)``, means ``(M, d)`` and covariances ``(M, d, d)`` over
    an ordered tuple of variable names."""

    def __init__(self, variables, weights, means, covs):
        self.variables = tuple(variables)
        d = len(self.variables)
        w = np.asarray(weights, dtype=float).reshape(-1)
        mu = np.asarray(means, dtype=float).reshape(w.size, d)
        S = np.asarray(covs, dtype=float).reshape(w.size, d, d)
        if w.size < 1:
            raise ValueError("a mixture needs at least one component")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12 * max(1, w.size):
            raise ValueError(f"mixture weights must be positive and sum to 1 (sum={w.sum()!r})")
        S = 0.5 * (S + S.transpose(0, 2, 1))
        for a in (w, mu, S):
            a.setflags(write=False)
        self.weights, self.means, self.covs = w, mu, S
        self._chol = None

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return len(self.variables)

    def __repr__(self):
        return f"GaussianMixture(variables={self.variables}, M={self.n_components})"

    def _factor(self):
        if self._chol is None:
            if self.dim == 0:
                self._chol = (np.zeros((self.n_components, 0, 0)), np.zeros(self.n_components))
            else:
                L = np.linalg.cholesky(self.covs)
                Linv = np.linalg.inv(L)
                logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
                self._chol = (Linv, logdet)
        return self._chol

    def component_log_pdf(self, X) -> np.ndarray:
        """``(M, n)`` matrix of ``log alpha_k + log N(x_n; mu_k, Sigma_k)``."""
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        logw = np.log(self.weights)[:, None]
        if self.dim == 0:
            return np.broadcast_to(logw, (self.n_components, n)).copy()
        Linv, logdet = self._factor()
        LinvT = Linv.transpose(0, 2, 1)
        z = X @ LinvT - np.einsum("kj,kij->ki", self.means, Linv)[:, None, :]
        maha = np.square(z).sum(axis=2)
        return logw - 0.5 * (self.dim * LOG_2PI + logdet[:, None] + maha)

    def to_json(self) -> dict:
        tril = np.tril_indices(self.dim)
        return {
            "variables": list(self.variables),
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "cov_tril": [S[tril].tolist() for S in self.covs],
        }

    @classmethod
    def from_json(cls, d) -> "GaussianMixture":
        dim = len(d["variables"])
        M = len(d["weights"])
        covs = np.zeros((M, dim, dim))
        tril = np.tril_indices(dim)
        for k, entries in enumerate(d["cov_tril"]):
            covs[k][tril] = entries
            covs[k] = np.tril(covs[k]) + np.tril(covs[k], -1).T
        return cls(d["variables"], d["weights"], np.reshape(d["means"], (M, dim)), covs)

    def same_parameters(self, other: "GaussianMixture") -> bool:
        return (
            self.variables == other.variables
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.covs, other.covs)
        )


def unit_mixture() -> GaussianMixture:
    """The zero-dimensional mixture whose density is identically 1."""
    return GaussianMixture((), [1.0], np.zeros((1, 0)), np.zeros((1, 0, 0)))


def _as_rows(gm: GaussianMixture, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != gm.dim:
        raise ValueError(f"dimension mismatch: mixture has d={gm.dim}, got shape {np.shape(x)}")
    return X, single


def log_density(gm: GaussianMixture, x):
    """Log density at a point (returns float) or at each row of a matrix."""
    X, single = _as_rows(gm, x)
    if gm.dim == 0:
        out = np.zeros(X.shape[0])
    else:
        out = logsumexp(gm.component_log_pdf(X), axis=0)
    return float(out[0]) if single else out


def param_count(gm: GaussianMixture) -> int:
    M, d = gm.n_components, gm.dim
    return (M - 1) + M * d + M * d * (d + 1) // 2


# -- fitting ---------------------------------------------------------------


def floor_covariances(S: np.ndarray, floor: float) -> np.ndarray:
    """Clamp eigenvalues of each symmetric matrix in ``S`` from below."""
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    vals, vecs = np.linalg.eigh(S)
    if np.all(vals >= floor):
        return S
    vals = np.maximum(vals, floor)
    out = np.einsum("...ij,...j,...kj->...ik", vecs, vals, vecs)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


@dataclass
class EmTrace:
    mixture: GaussianMixture
    log_likelihoods: list = field(default_factory=list)
    drop_iterations: list = field(default_factory=list)

    @property
    def log_likelihood(self) -> float:
        return self.log_likelihoods[-1]


def _single_gaussian(X, variables, floor):
    mu = X.mean(axis=0)
    diff = X - mu
    S = diff.T @ diff / X.shape[0]
    S = floor_covariances(S[None], floor)
    return GaussianMixture(variables, [1.0], mu[None], S)


def _initial(X, M, config, rng, variables):
    n, d = X.shape
    rows = rng.choice(n, size=M, replace=False)
    mu = X[rows]
    diff = X - X.mean(axis=0)
    S = (diff.T @ diff / n) / M
    covs = floor_covariances(np.repeat(S[None], M, axis=0), config.cov_floor)
    return np.full(M, 1.0 / M), mu, covs


def em_trace(X, M: int, config: EmConfig, seed: int, init: GaussianMixture | None = None, variables=None) -> EmTrace:
    """One EM run from a seeded (or given) starting point, keeping the
    per-iteration training log-likelihood."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if variables is None:
        variables = init.variables if init is not None else tuple(f"x{j}" for j in range(d))
    if M == 1 and init is None:
        gm = _single_gaussian(X, variables, config.cov_floor)
        return EmTrace(gm, [float(log_density(gm, X).sum())])

    if init is not None:
        w, mu, covs = init.weights.copy(), init.means.copy(), floor_covariances(init.covs.copy(), config.cov_floor)
        M = w.size
    else:
        w, mu, covs = _initial(X, M, config, np.random.default_rng(seed), variables)
    trace = EmTrace(None)
    X = np.ascontiguousarray(X)
    prev_ll = None
    for it in range(config.max_iterations + 1):
        gm = GaussianMixture(variables, w / w.sum(), mu, covs)
        Linv, logdet = gm._factor()
        ll, resp, Nk = e_step(X, np.log(gm.weights), gm.means, Linv, logdet)
        trace.log_likelihoods.append(ll)
        trace.mixture = gm
        if prev_ll is not None and ll - prev_ll < config.rel_tol * abs(prev_ll):
            break
        if it == config.max_iterations:
            break
        prev_ll = ll

        keep = Nk / n >= 1e-6 / w.size
        if not np.all(keep):
            trace.drop_iterations.append(it + 1)
            resp, Nk = np.ascontiguousarray(resp[keep]), Nk[keep]
            # the likelihood of the reduced model is not comparable with the last one
            prev_ll = None
        w = Nk / Nk.sum()
        mu, covs = m_step(X, resp, Nk)
        covs = floor_covariances(covs, config.cov_floor)
    return trace


def _check_data(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise ValueError("empty data")
    if X.shape[1] == 0:
        raise ValueError("em_fit needs at least one continuous column")
    return X


def em_fit(X, M: int, config: EmConfig, init: GaussianMixture | None = None, variables=None) -> GaussianMixture:
    """Best-of-``restarts`` EM fit with ``M`` components.

    Deterministic given ``config.seed``.  Ties between restarts keep the
    earliest one.
    """
    X = _check_data(X)
    if M > X.shape[0]:
        raise ValueError(f"M={M} exceeds the number of rows ({X.shape[0]})")
    if init is not None:
        return em_trace(X, M, config, config.seed, init=init, variables=variables).mixture
    restarts = 1 if M == 1 else config.restarts
    best = None
    for r in range(restarts):
        t = em_trace(X, M, config, derive_seed(config.seed, M, r), variables=variables)
        if best is None or t.log_likelihood > best.log_likelihood:
            best = t
    return best.mixture


def bic(gm: GaussianMixture, X) -> float:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None] if gm.dim == 1 else X[None, :]
    if X.shape[0] == 0:
        raise ValueError("empty data")
    ll = float(np.sum(log_density(gm, X)))
    return ll - 0.5 * math.log(X.shape[0]) * param_count(gm)


def select_mixture(X, config: EmConfig, variables=None) -> GaussianMixture:
    """EM fit for every grid size ``M <= rows``; keep the highest BIC
    (smaller ``M`` on ties)."""
    X = _check_data(X)
    best, best_score = None, -math.inf
    for M in config.component_grid:
        if M > X.shape[0]:
            break
        gm = em_fit(X, M, config, variables=variables)
        score = bic(gm, X)
        if score > best_score:
            best, best_score = gm, score
    return best


# -- exact transformations -------------------------------------------------


def _indices(gm: GaussianMixture, names):
    idx = []
    for v in names:
        if v not in gm.variables:
            raise KeyError(f"unknown variable {v!r}")
        idx.append(gm.variables.index(v))
    return idx


def marginalize(gm: GaussianMixture, keep) -> GaussianMixture:
    """Restrict to ``keep`` (order follows the mixture's own variable order)."""
    keep = set(keep)
    _indices(gm, keep)
    idx = [i for i, v in enumerate(gm.variables) if v in keep]
    if len(idx) == gm.dim:
        return gm
    if not idx:
        return unit_mixture()
    names = [gm.variables[i] for i in idx]
    return GaussianMixture(names, gm.weights, gm.means[:, idx], gm.covs[:, idx][:, :, idx])


def _conditional_parts(gm: GaussianMixture, obs_names):
    o = _indices(gm, obs_names)
    u = [i for i in range(gm.dim) if i not in o]
    S = gm.covs
    Soo = S[:, o][:, :, o]
    Suo = S[:, u][:, :, o]
    Suu = S[:, u][:, :, u]
    gain = np.linalg.solve(Soo, Suo.transpose(0, 2, 1)).transpose(0, 2, 1)  # Suo Soo^-1
    cond_cov = Suu - gain @ Suo.transpose(0, 2, 1)
    obs_marginal = GaussianMixture([gm.variables[i] for i in o], gm.weights, gm.means[:, o], Soo)
    return o, u, gain, cond_cov, obs_marginal


def condition(gm: GaussianMixture, observed: dict) -> GaussianMixture:
    """Mixture over the unobserved variables given ``observed`` values."""
    if not observed:
        return gm
    names = list(observed)
    o, u, gain, cond_cov, obs_marginal = _conditional_parts(gm, names)
    xo = np.array([float(observed[gm.variables[i]]) for i in o])
    logp = obs_marginal.component_log_pdf(xo[None])[:, 0]
    # exp() of anything below this underflows to 0.0
    if not logsumexp(logp) > LOG_TINY:
        raise ValueError("conditioning on impossible evidence")
    w = np.exp(logp - logsumexp(logp))
    keep = w > 0
    mu = gm.means[:, u] + np.einsum("kij,kj->ki", gain, xo[None] - gm.means[:, o])
    w = w[keep] / w[keep].sum()
    return GaussianMixture([gm.variables[i] for i in u], w, mu[keep], cond_cov[keep])


def combine(mixtures, weights) -> GaussianMixture:
    """Convex combination of mixtures over the same variables."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("combination weights must be a probability vector")
    variables = mixtures[0].variables
    for m in mixtures:
        if m.variables != variables:
            raise ValueError(f"variable-list mismatch: {m.variables} vs {variables}")
    w = np.concatenate([wj * m.weights for wj, m in zip(weights, mixtures)])
    mu = np.concatenate([m.means for m in mixtures])
    S = np.concatenate([m.covs for m in mixtures])
    keep = w >= 1e-12
    w = w[keep] / w[keep].sum()
    return GaussianMixture(variables, w, mu[keep], S[keep])


# -- sampling --------------------------------------------------------------


def _draw(weights_rows, means_rows, chol, rng):
    """One draw per row from row-specific component weights and means."""
    n = weights_rows.shape[0]
    cum = np.cumsum(weights_rows, axis=1)
    u = rng.random(n)[:, None] * cum[:, -1:]
    k = np.minimum((u > cum).sum(axis=1), weights_rows.shape[1] - 1)
    d = means_rows.shape[-1]
    z = rng.standard_normal((n, d))
    return means_rows[np.arange(n), k] + np.einsum("nij,nj->ni", chol[k], z)


def sample(gm: GaussianMixture, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws; ``seed`` may be an int or a ``numpy`` Generator."""
    if n < 0:
        raise ValueError("n must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n == 0:
        return np.empty((0, gm.dim))
    chol = np.linalg.cholesky(gm.covs) if gm.dim else np.zeros((gm.n_components, 0, 0))
    W = np.broadcast_to(gm.weights, (n, gm.n_components))
    mu = np.broadcast_to(gm.means, (n,) + gm.means.shape)
    return _draw(W, mu, chol, rng)


def sample_conditional(gm: GaussianMixture, observed_names, O, rng: np.random.Generator) -> np.ndarray:
    """One draw of the unobserved variables for each row of observations ``O``.

    Equivalent to ``sample(condition(gm, row), 1)`` per row, vectorized.
    """
    O = np.asarray(O, dtype=float)
    n = O.shape[0]
    if not observed_names:
        return sample(gm, n, rng)
    o, u, gain, cond_cov, obs_marginal = _conditional_parts(gm, observed_names)
    logp = obs_marginal.component_log_pdf(O).T  # (n, M)
    lse = logsumexp(logp, axis=1, keepdims=True)
    if not np.all(np.isfinite(lse)):
        raise ValueError("conditioning on impossible evidence")
    W = np.exp(logp - lse)
    mu = gm.means[None, :, u] + np.einsum("kij,nkj->nki", gain, O[:, None, :] - gm.means[None, :, o])
    chol = np.linalg.cholesky(cond_cov)
    return _draw(W, mu, chol, rng)
