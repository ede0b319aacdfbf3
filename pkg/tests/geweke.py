"""Joint-distribution (successive-conditional) simulator for sampler checks."""

import math

import numpy as np
from scipy import stats

from ncg.gibbs import gibbs_step
from ncg.model import Dataset, GibbsState


def prior_draw(h, X, rng):
    """(beta, z, sigma2, y) from the prior and likelihood, sampled top-down."""
    p = X.shape[1]
    sigma2 = stats.invgamma(h.c0, scale=h.d0).rvs(random_state=rng)
    z = np.empty((h.depth, p))
    for k, c in enumerate(h.c, start=1):
        rate = h.phi if k == h.depth else 1.0
        g = rng.gamma(c, 1.0 / rate, size=p)
        z[k - 1] = g if k % 2 == 1 else 1.0 / g
    beta = rng.standard_normal(p) * np.sqrt(sigma2 * z.prod(axis=0))
    y = X @ beta + rng.standard_normal(X.shape[0]) * np.sqrt(sigma2)
    return beta, z, sigma2, y


def successive_conditional(h, n_iter, seed, n=4, p=2):
    """Alternate one Gibbs sweep with a fresh y | beta, sigma2; track (beta_1, sigma2, z_11)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta, z, sigma2, y = prior_draw(h, X, rng)
    data = Dataset(X, y)
    state = GibbsState(beta, z, sigma2)
    out = np.empty((n_iter, 3))
    for t in range(n_iter):
        gibbs_step(state, data, h, rng)
        data.y = X @ state.beta + rng.standard_normal(n) * math.sqrt(state.sigma2)
        out[t] = state.beta[0], state.sigma2, state.z[0, 0]
    return out


def prior_moments(h):
    """Exact E[beta_1], E[sigma2], E[z_11], E[beta_1^2] (needs c0 > 1, even c_k > 1)."""
    lam = 1.0
    for k, ck in enumerate(h.c, start=1):
        rate = h.phi if k == h.depth else 1.0
        lam *= ck / rate if k % 2 == 1 else rate / (ck - 1.0)
    es2 = h.d0 / (h.c0 - 1.0)
    z11 = h.c[0] / (h.phi if h.depth == 1 else 1.0)
    return 0.0, es2, z11, es2 * lam
