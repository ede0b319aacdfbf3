"""Special functions and random variate generators.

Gamma-family and GIG draws run in compiled kernels (see ``_kernels``); the
Bessel and digamma evaluations wrap scipy with a high-precision fallback for
arguments where the double-precision routines over/underflow.
"""

from dataclasses import dataclass
import math

import mpmath
import numpy as np
from scipy import special as sp

from . import _kernels
from .exceptions import DomainError


@dataclass(frozen=True)
class GigParams:
    """GIG(lambda, chi, psi): density prop. to x**(lambda-1) exp(-(chi/x + psi*x)/2)."""

    lam: float
    chi: float
    psi: float

    def validate(self):
        lam, chi, psi = self.lam, self.chi, self.psi
        if not all(math.isfinite(v) for v in (lam, chi, psi)):
            raise DomainError(f"non-finite GIG parameters {self}")
        if chi < 0 or psi < 0:
            raise DomainError(f"GIG requires chi, psi >= 0, got {self}")
        if lam <= 0 and chi <= 0:
            raise DomainError(f"GIG with lambda <= 0 needs chi > 0, got {self}")
        if lam >= 0 and psi <= 0:
            raise DomainError(f"GIG with lambda >= 0 needs psi > 0, got {self}")
        return self


def _check_positive(name, value):
    if not (np.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")


def log_gamma_fn(x):
    """ln Gamma(x) for x > 0."""
    _check_positive("x", x)
    return float(sp.gammaln(x))


def digamma(x):
    """psi(x) = d/dx ln Gamma(x) for x > 0."""
    _check_positive("x", x)
    return float(sp.digamma(x))


def _log_kve_scalar_hp(nu, x):
    with mpmath.workdps(30):
        return float(mpmath.log(mpmath.besselk(nu, x))) + x


def _log_kve(nu, x):
    # ln(K_nu(x) e^x), vectorised; |nu| makes the result exactly even in nu
    nu = np.abs(np.asarray(nu, dtype=float))
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = np.log(sp.kve(nu, x))
    bad = ~np.isfinite(out)
    if np.any(bad):
        out = np.array(out, dtype=float, ndmin=1)
        b_nu, b_x = (np.array(a, ndmin=1) for a in np.broadcast_arrays(nu, x))
        for pos in zip(*np.nonzero(np.atleast_1d(bad))):
            out[pos] = _log_kve_scalar_hp(float(b_nu[pos]), float(b_x[pos]))
        out = out.reshape(np.shape(bad))
    return out


def log_bessel_k(nu, x):
    """ln K_nu(x), the modified Bessel function of the second kind.

    Accepts scalars or arrays. Even in ``nu`` by construction.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)) or np.any(~np.isfinite(x_arr)):
        raise DomainError(f"log_bessel_k requires x > 0, got {x!r}")
    out = _log_kve(nu, x_arr) - x_arr
    return float(out) if np.ndim(out) == 0 else out


def bessel_k_dnu(nu, x):
    """d/dnu ln K_nu(x) by a Richardson-extrapolated central difference.

    Step h = 1e-6 * max(1, |nu|). Differences are taken on ln(K e^x) so the
    large -x term cancels exactly.
    """
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(x_arr > 0)):
        raise DomainError(f"bessel_k_dnu requires x > 0, got {x!r}")
    nu_arr = np.asarray(nu, dtype=float)
    h = 1e-6 * np.maximum(1.0, np.abs(nu_arr))

    def central(step):
        return (_log_kve(nu_arr + step, x_arr) - _log_kve(nu_arr - step, x_arr)) / (2.0 * step)

    d = (4.0 * central(0.5 * h) - central(h)) / 3.0
    return float(d) if np.ndim(d) == 0 else d


def sample_gamma(shape, rate, rng, size=None):
    """Gamma(shape, rate) draws (mean shape/rate) via Marsaglia-Tsang."""
    _check_positive("shape", shape)
    _check_positive("rate", rate)
    if size is None:
        return float(_kernels.std_gamma(rng, float(shape)) / rate)
    return _kernels.gamma_array(rng, float(shape), float(rate), int(size))


def sample_inverse_gamma(shape, scale, rng, size=None):
    """InverseGamma(shape, scale) draws: scale / Gamma(shape, 1)."""
    _check_positive("shape", shape)
    _check_positive("scale", scale)
    if size is None:
        return float(scale / _kernels.std_gamma(rng, float(shape)))
    return _kernels.inverse_gamma_array(rng, float(shape), float(scale), int(size))


def sample_gig(params, rng, size=None):
    """Exact GIG draws (Devroye's rejection sampler; valid for all real lambda).

    chi == 0 with lambda > 0 falls back to Gamma(lambda, psi/2); psi == 0 with
    lambda < 0 to InverseGamma(-lambda, chi/2).
    """
    params.validate()
    lam, chi, psi = float(params.lam), float(params.chi), float(params.psi)
    if size is None:
        return float(math.exp(_kernels.log_gig(rng, lam, chi, psi)))
    return _kernels.gig_array(rng, lam, chi, psi, int(size))


def gig_moment_arrays(lam, chi, psi):
    """Vectorised (E[x], E[1/x], E[log x]) of GIG(lam, chi, psi).

    E[x^a] = (chi/psi)^(a/2) K_{lam+a}(w) / K_lam(w) with w = sqrt(chi psi);
    E[log x] = log(chi/psi)/2 + d/dnu ln K_nu(w) at nu = lam. Entries with
    chi == 0 (lam > 0) use the Gamma(lam, psi/2) limit.
    """
    lam, chi, psi = np.broadcast_arrays(
        np.asarray(lam, dtype=float), np.asarray(chi, dtype=float), np.asarray(psi, dtype=float)
    )
    mean = np.empty(lam.shape)
    inv_mean = np.empty(lam.shape)
    log_mean = np.empty(lam.shape)

    lim = chi < _kernels.CHI_FLOOR
    if np.any(lim & (lam <= 0)) or np.any((psi <= 0) | (chi < 0)):
        raise DomainError("improper GIG parameters in gig_moment_arrays")
    reg = ~lim
    if np.any(reg):
        l, c, s = lam[reg], chi[reg], psi[reg]
        w = np.sqrt(c * s)
        half_log_ratio = 0.5 * (np.log(c) - np.log(s))
        lk = _log_kve(l, w)
        mean[reg] = np.exp(half_log_ratio + _log_kve(l + 1.0, w) - lk)
        inv_mean[reg] = np.exp(-half_log_ratio + _log_kve(l - 1.0, w) - lk)
        log_mean[reg] = half_log_ratio + bessel_k_dnu(l, w)
    if np.any(lim):
        l, s = lam[lim], psi[lim]
        rate = 0.5 * s
        mean[lim] = l / rate
        with np.errstate(divide="ignore"):
            inv_mean[lim] = np.where(l > 1.0, rate / (l - 1.0), np.inf)
        log_mean[lim] = sp.digamma(l) - np.log(rate)
    return mean, inv_mean, log_mean


def gig_moments(params):
    """(E[x], E[1/x], E[log x]) for a single GIG."""
    params.validate()
    m, im, lm = gig_moment_arrays(params.lam, params.chi, params.psi)
    return float(m), float(im), float(lm)


def solve_digamma(target, weight=1):
    """Return c > 0 with weight * psi(c) == target.

    Safeguarded Newton (bisection fallback) on the bracket (1e-8, 1e8).
    """
    if not np.isfinite(target):
        raise DomainError(f"solve_digamma needs a finite target, got {target!r}")
    if weight <= 0:
        raise DomainError(f"weight must be positive, got {weight!r}")
    y = target / weight
    lo, hi = 1e-8, 1e8
    if y <= sp.digamma(lo):
        return lo
    if y >= sp.digamma(hi):
        return hi
    # standard initial guess: inverse of psi(x) ~ log(x - 1/2)
    c = math.exp(y) + 0.5 if y >= -2.22 else -1.0 / (y + 0.5772156649015329)
    c = min(max(c, lo), hi)
    for _ in range(100):
        f = sp.digamma(c) - y
        if f > 0:
            hi = c
        else:
            lo = c
        step = f / sp.polygamma(1, c)
        new = c - step
        if not (lo < new < hi):
            new = math.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        if abs(new - c) <= 1e-15 * c:
            c = new
            break
        c = new
    return float(c)
