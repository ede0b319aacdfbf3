"""Numerical study of the compound-gamma scale prior.

Two samplers give the same law for the first-level scale: the nested chain
(each level's rate is the next level's draw) and the alternating product of
independent gamma / inverse-gamma factors. Densities are Monte Carlo
averages of normal densities over scale draws, evaluated in log space.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np
from scipy import special as sp
from scipy.stats import norm

from . import _kernels
from .model import validate_hyperparameters


def _size(size):
    return 1 if size is None else int(size)


def _scalar_or_array(arr, size):
    return float(arr[0]) if size is None else arr


def sample_prior_scale_chain(h, rng, size=None):
    """First-level scale drawn top-down through the nested gamma chain.

    z_N ~ Gamma(c_N, rate=phi), then z_k ~ Gamma(c_k, rate=z_{k+1}) down to
    k = 1. Uses numpy's gamma generator so it shares no code with the
    product sampler.
    """
    validate_hyperparameters(h, warn=False)
    m = _size(size)
    z = rng.gamma(h.c[-1], 1.0 / h.phi, size=m)
    for ck in reversed(h.c[:-1]):
        with np.errstate(divide="ignore", over="ignore"):
            z = rng.gamma(ck, 1.0 / z)
    return _scalar_or_array(z, size)


def log_prior_scale_product(h, rng, size):
    """log of prod_k w_k with w_odd ~ Gamma(c_k, 1) and w_even ~ InvGamma(c_k, 1).

    The terminal level carries phi as its rate (odd) or scale (even).
    """
    validate_hyperparameters(h, warn=False)
    m = int(size)
    out = np.zeros(m)
    for k, ck in enumerate(h.c, start=1):
        lg = _kernels.log_gamma_array(rng, float(ck), m)
        out += lg if k % 2 == 1 else -lg
    # Gamma(a, phi) = Gamma(a, 1) / phi; InvGamma(a, phi) = phi * InvGamma(a, 1)
    out += -math.log(h.phi) if h.depth % 2 == 1 else math.log(h.phi)
    return out


def sample_prior_scale_product(h, rng, size=None):
    """First-level scale via the alternating product representation."""
    with np.errstate(over="ignore", under="ignore"):
        z = np.exp(log_prior_scale_product(h, rng, _size(size)))
    return _scalar_or_array(z, size)


def sample_prior_beta(h, rng, size, sigma2=1.0):
    """beta ~ N(0, sigma2 * lambda) with lambda from the product representation."""
    log_lam = log_prior_scale_product(h, rng, size)
    with np.errstate(over="ignore", under="ignore"):
        return np.sqrt(sigma2) * np.exp(0.5 * log_lam) * rng.standard_normal(int(size))


def sample_horseshoe_beta(rng, size, sigma2=1.0):
    """beta from the half-Cauchy hierarchy.

    tau ~ C+(0, 1), s ~ C+(0, tau), beta ~ N(0, sigma2 * s^2); the local
    variance s^2 plays the role of the first-level scale.
    """
    m = int(size)
    tau = np.abs(rng.standard_cauchy(m))
    s = tau * np.abs(rng.standard_cauchy(m))
    return np.sqrt(sigma2) * s * rng.standard_normal(m)


def _log_normal_pdf(x, log_var):
    return -0.5 * (math.log(2.0 * math.pi) + log_var) - 0.5 * x * x * np.exp(-log_var)


def _mc_log_mean(logw):
    # log of the sample mean of exp(logw) and the delta-method standard error
    n = logw.size
    m = logw.max()
    if not np.isfinite(m):
        return m, 0.0
    w = np.exp(logw - m)
    mean = w.mean()
    se = w.std(ddof=1) / (math.sqrt(n) * mean) if n > 1 else 0.0
    return float(m + math.log(mean)), float(se)


def marginal_log_density(x, h, n_mc, rng, sigma2=1.0, log_lam=None):
    """Monte Carlo estimate of the log marginal prior density of beta at ``x``.

    Returns (log_density, stderr), the error being for the log estimate.
    ``log_lam`` supplies shared scale draws (common random numbers).
    """
    if log_lam is None:
        if n_mc < 10_000:
            raise ValueError("n_mc must be at least 1e4")
        log_lam = log_prior_scale_product(h, rng, n_mc)
    logv = log_lam + math.log(sigma2)
    with np.errstate(over="ignore", under="ignore"):
        logw = _log_normal_pdf(float(x), logv)
    return _mc_log_mean(logw)


def density_curve(grid, h, n_mc, rng, sigma2=1.0):
    """Log marginal density on ``grid`` using one set of scale draws.

    Returns a structured array with fields x, log_density, stderr.
    """
    grid = np.asarray(grid, dtype=float).ravel()
    if not np.all(np.isfinite(grid)):
        raise ValueError("grid must be finite")
    if n_mc < 10_000:
        raise ValueError("n_mc must be at least 1e4")
    log_lam = log_prior_scale_product(h, rng, n_mc)
    out = np.empty(grid.size, dtype=[("x", float), ("log_density", float), ("stderr", float)])
    for i, x in enumerate(grid):
        ld, se = marginal_log_density(x, h, n_mc, None, sigma2, log_lam=log_lam)
        out[i] = (x, ld, se)
    return out


def prior_second_moment(h, sigma2=1.0):
    """E[beta^2] from the product representation; ``inf`` if an even shape <= 1.

    Odd levels contribute c_k, even levels 1/(c_k - 1); the terminal level is
    divided by phi when odd and multiplied by phi when even.
    """
    validate_hyperparameters(h, warn=False)
    m = float(sigma2)
    for k, ck in enumerate(h.c, start=1):
        if k % 2 == 1:
            m *= ck
        elif ck <= 1.0:
            return math.inf
        else:
            m /= ck - 1.0
    return m / h.phi if h.depth % 2 == 1 else m * h.phi


def log_density_at_zero(h, sigma2=1.0):
    """Exact log f(0) = log E[(2 pi sigma2 lambda)^(-1/2)]; ``inf`` at a pole.

    Odd levels contribute E[g^(-1/2)] = Gamma(c - 1/2)/Gamma(c), finite only
    for c > 1/2; even levels E[g^(1/2)] = Gamma(c + 1/2)/Gamma(c).
    """
    validate_hyperparameters(h, warn=False)
    out = -0.5 * math.log(2.0 * math.pi * sigma2)
    for k, ck in enumerate(h.c, start=1):
        if k % 2 == 1:
            if ck <= 0.5:
                return math.inf
            out += sp.gammaln(ck - 0.5) - sp.gammaln(ck)
        else:
            out += sp.gammaln(ck + 0.5) - sp.gammaln(ck)
    sign = 1.0 if h.depth % 2 == 1 else -1.0
    return float(out + sign * 0.5 * math.log(h.phi))


@dataclass(frozen=True)
class ConsistencyCheckInput:
    n: int
    p_n: int
    s_n: int
    u: float

    def __post_init__(self):
        if self.n < 1 or self.p_n < 1 or self.s_n < 1:
            raise ValueError("n, p_n and s_n must be positive integers")
        if self.s_n > self.p_n:
            raise ValueError("s_n must not exceed p_n")
        if not self.u > 0:
            raise ValueError("u must be positive")

    @property
    def k_n(self):
        return math.sqrt(self.s_n * math.log(self.p_n) / self.n) / self.p_n

    @property
    def bound(self):
        return self.p_n ** (-(1.0 + self.u))


def wilson_interval(p_hat, n, level=0.99):
    """Wilson score interval for a proportion estimated from ``n`` trials."""
    zc = norm.ppf(0.5 + 0.5 * level)
    z2 = zc * zc
    denom = 1.0 + z2 / n
    centre = (p_hat + z2 / (2 * n)) / denom
    half = zc * math.sqrt(p_hat * (1 - p_hat) / n + z2 / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class TailReport:
    inputs: dict
    hyperparameters: dict
    n_mc: int
    k_n: float
    tail_mass_estimate: float
    interval: tuple
    bound: float
    satisfied: bool
    sufficient_c1: float

    def to_dict(self):
        d = asdict(self)
        d["interval"] = list(self.interval)
        return d


def check_tail_condition(h, inp, n_mc, rng, level=0.99, chunk=1_000_000):
    """Estimate P(|beta| > k_n) under the prior (sigma2 = 1) and compare to p_n^-(1+u).

    The tail is averaged as 2 * Phi(-k_n / sqrt(lambda)) over scale draws
    (Rao-Blackwellised). The Wilson interval treats the estimate as a
    proportion over ``n_mc`` trials, which is conservative because the
    averaged terms vary less than Bernoulli indicators. ``satisfied`` needs
    the whole interval below the bound.
    """
    k = inp.k_n
    total = 0.0
    left = int(n_mc)
    while left > 0:
        m = min(chunk, left)
        log_lam = log_prior_scale_product(h, rng, m)
        with np.errstate(over="ignore", under="ignore"):
            t = k * np.exp(-0.5 * log_lam)
        total += float(sp.erfc(t / math.sqrt(2.0)).sum())
        left -= m
    est = total / n_mc
    lo, hi = (float(v) for v in wilson_interval(est, n_mc, level))
    bound = inp.bound
    return TailReport(inputs=asdict(inp), hyperparameters=h.to_dict(), n_mc=int(n_mc),
                      k_n=k, tail_mass_estimate=est, interval=(lo, hi), bound=bound,
                      satisfied=bool(hi < bound), sufficient_c1=k * k * bound)


@dataclass
class DensityFloorReport:
    inputs: dict
    hyperparameters: dict
    n_mc: int
    log_density: float
    stderr: float
    ratio: float

    def to_dict(self):
        return asdict(self)


def check_density_floor(h, E_n, p_n, n_mc, rng):
    """Report -log f(E_n) / log p_n, f being the marginal prior density.

    The density is symmetric and unimodal, so its infimum on [-E_n, E_n]
    sits at the endpoint. E_n = 0 uses the exact density at the origin;
    when that is a pole the ratio is reported as 0.
    """
    if not (math.isfinite(E_n) and E_n >= 0):
        raise ValueError("E_n must be a finite nonnegative number")
    if p_n < 2:
        raise ValueError("p_n must be at least 2 for log p_n > 0")
    inputs = {"E_n": float(E_n), "p_n": int(p_n)}
    if E_n == 0:
        ld = log_density_at_zero(h)
        ratio = 0.0 if math.isinf(ld) else -ld / math.log(p_n)
        return DensityFloorReport(inputs, h.to_dict(), int(n_mc), ld, 0.0, ratio)
    ld, se = marginal_log_density(E_n, h, n_mc, rng)
    return DensityFloorReport(inputs, h.to_dict(), int(n_mc), ld, se, -ld / math.log(p_n))
