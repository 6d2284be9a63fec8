"""Compiled EM inner loops (one pass over the data per step)."""

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def e_step(X, logw, means, Linv, logdet):
    """Responsibilities ``(M, n)``, their column sums and the log-likelihood.

    ``Linv`` holds the (lower-triangular) inverse Cholesky factors.
    """
    n, d = X.shape
    M = means.shape[0]
    resp = np.empty((M, n))
    const = d * LOG_2PI
    ll = 0.0
    for i in range(n):
        top = -np.inf
        for k in range(M):
            maha = 0.0
            for a in range(d):
                s = 0.0
                for b in range(a + 1):
                    s += Linv[k, a, b] * (X[i, b] - means[k, b])
                maha += s * s
            lp = logw[k] - 0.5 * (const + logdet[k] + maha)
            resp[k, i] = lp
            if lp > top:
                top = lp
        tot = 0.0
        for k in range(M):
            tot += math.exp(resp[k, i] - top)
        lse = top + math.log(tot)
        ll += lse
        for k in range(M):
            resp[k, i] = math.exp(resp[k, i] - lse)
    Nk = np.zeros(M)
    for k in range(M):
        for i in range(n):
            Nk[k] += resp[k, i]
    return ll, resp, Nk


@njit(cache=True)
def m_step(X, resp, Nk):
    """Weighted means and centered weighted covariances."""
    n, d = X.shape
    M = resp.shape[0]
    mu = np.zeros((M, d))
    S = np.zeros((M, d, d))
    for k in range(M):
        for i in range(n):
            r = resp[k, i]
            for a in range(d):
                mu[k, a] += r * X[i, a]
        for a in range(d):
            mu[k, a] /= Nk[k]
        for i in range(n):
            r = resp[k, i]
            for a in range(d):
                da = X[i, a] - mu[k, a]
                for b in range(a + 1):
                    S[k, a, b] += r * da * (X[i, b] - mu[k, b])
        for a in range(d):
            for b in range(a + 1):
                S[k, a, b] /= Nk[k]
                S[k, b, a] = S[k, a, b]
    return mu, S
