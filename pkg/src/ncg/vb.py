"""Mean-field coordinate-ascent variational inference for the NCG model.

Factors: q(beta) = N(mu, V); odd levels q(z_kj) = GIG(c_k - 1/2, c*_kj, 2 phi_k);
even levels q(z_kj) = IG(c_k + 1/2, c*_kj); q(sigma2) = IG((n+p+2c0)/2, d0*).
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy import linalg
from scipy.special import digamma, gammaln

from .exceptions import EMFault, InferenceFault
from .model import validate_hyperparameters
from .special import gig_moment_arrays, log_bessel_k, solve_digamma

log = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
C_BOUNDS = (1e-3, 1e3)


@dataclass
class VariationalState:
    mu: np.ndarray
    V: np.ndarray
    c_star: np.ndarray
    d0_star: float
    Ez: np.ndarray
    Einvz: np.ndarray
    Elogz: np.ndarray
    E_inv_sigma2: float
    sigma2_shape: float
    trace: list = field(default_factory=list)
    v_scale: str = "exact"

    @classmethod
    def initial(cls, data, h):
        N, p = h.depth, data.p
        s2 = float(np.var(data.y, ddof=1)) if data.n > 1 else 1.0
        if not s2 > 0:
            s2 = 1.0
        shape = 0.5 * (data.n + p + 2.0 * h.c0)
        return cls(mu=np.zeros(p), V=np.eye(p), c_star=np.ones((N, p)),
                   d0_star=shape * s2, Ez=np.ones((N, p)), Einvz=np.ones((N, p)),
                   Elogz=np.zeros((N, p)), E_inv_sigma2=1.0 / s2, sigma2_shape=shape)

    @property
    def Eb2(self):
        return self.mu ** 2 + np.diag(self.V)

    def precision_scales(self):
        """diag of Z*^-1: prod_k E[1/z_kj]."""
        return np.prod(self.Einvz, axis=0)

    def to_dict(self, h=None):
        d = {"mu_star": self.mu.tolist(), "V_star_diag": np.diag(self.V).tolist(),
             "c_star": self.c_star.tolist(), "d0_star": self.d0_star,
             "E_inv_sigma2": self.E_inv_sigma2}
        if h is not None:
            d["c"] = list(h.c)
        return d


def _level_moments(k, c_star_row, h):
    # k is 1-based
    ck = h.c[k - 1]
    phik = h.phi if k == h.depth else 1.0
    if k % 2 == 1:
        return gig_moment_arrays(ck - 0.5, c_star_row, 2.0 * phik)
    a = ck + 0.5
    with np.errstate(divide="ignore"):
        Ez = np.where(a > 1.0, c_star_row / (a - 1.0), np.inf)
    return Ez, a / c_star_row, np.log(c_star_row) - digamma(a)


def vb_update_beta(state, data, h=None):
    """mu* = (X'X + Z*^-1)^-1 X'y and V* = s (X'X + Z*^-1)^-1.

    With ``state.v_scale == "exact"`` (default) s = 1 / E[1/sigma2], the
    coordinate-ascent optimum, which keeps the ELBO monotone. ``"mean"``
    uses s = E[sigma2] instead (needs a posterior shape above 1).
    """
    A = data.X.T @ data.X + np.diag(state.precision_scales())
    try:
        cf = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise InferenceFault(f"X'X + Z*^-1 is singular: {exc}") from None
    state.mu = linalg.cho_solve(cf, data.X.T @ data.y)
    Ainv = linalg.cho_solve(cf, np.eye(data.p))
    if state.v_scale == "exact":
        V = Ainv / state.E_inv_sigma2
    elif state.v_scale == "mean":
        if state.sigma2_shape <= 1.0:
            raise InferenceFault("E[sigma2] is infinite for shape <= 1")
        V = Ainv * state.d0_star / (state.sigma2_shape - 1.0)
    else:
        raise ValueError(f"unknown v_scale {state.v_scale!r}")
    state.V = 0.5 * (V + V.T)
    if not (np.all(np.isfinite(state.mu)) and np.all(np.isfinite(state.V))):
        raise InferenceFault("non-finite q(beta) parameters")
    return state.mu, state.V


def vb_update_z_level(k, state, h):
    """Refresh c*_k and the cached moments of level k (1-based)."""
    rest = np.prod(np.delete(state.Einvz, k - 1, axis=0), axis=0)
    base = state.Eb2 * state.E_inv_sigma2 * rest
    phik = h.phi if k == h.depth else 1.0
    row = base if k % 2 == 1 else 0.5 * base + phik
    state.c_star[k - 1] = row
    Ez, Einvz, Elogz = _level_moments(k, row, h)
    state.Ez[k - 1], state.Einvz[k - 1], state.Elogz[k - 1] = Ez, Einvz, Elogz
    return row


def vb_update_sigma2(state, data, h):
    """d0* = (E||y - X beta||^2 + E[beta' Lambda* beta] + 2 d0) / 2."""
    resid = data.y - data.X @ state.mu
    e_rss = resid @ resid + np.sum((data.X.T @ data.X) * state.V)
    e_quad = np.sum(state.Eb2 * state.precision_scales())
    d0_star = 0.5 * (e_rss + e_quad + 2.0 * h.d0)
    if not (d0_star > 0 and np.isfinite(d0_star)):
        raise InferenceFault(f"invalid d0* = {d0_star}")
    state.d0_star = float(d0_star)
    state.E_inv_sigma2 = state.sigma2_shape / state.d0_star
    return state.d0_star, state.E_inv_sigma2


def elbo(state, data, h):
    """Evidence lower bound at the current (fresh) state, constants included."""
    n, p, N = data.n, data.p, h.depth
    a, b = state.sigma2_shape, state.d0_star
    e_log_s2 = math.log(b) - digamma(a)
    e_inv_s2 = a / b
    Eb2 = state.Eb2
    lam_inv = state.precision_scales()
    resid = data.y - data.X @ state.mu
    e_rss = resid @ resid + np.sum((data.X.T @ data.X) * state.V)

    lik = -0.5 * n * (LOG_2PI + e_log_s2) - 0.5 * e_inv_s2 * e_rss
    prior_beta = np.sum(-0.5 * (LOG_2PI + e_log_s2) - 0.5 * state.Elogz.sum(axis=0)
                        - 0.5 * e_inv_s2 * Eb2 * lam_inv)
    prior_s2 = h.c0 * math.log(h.d0) - gammaln(h.c0) - (h.c0 + 1) * e_log_s2 - h.d0 * e_inv_s2

    prior_z = 0.0
    ent_z = 0.0
    for k in range(1, N + 1):
        ck = h.c[k - 1]
        phik = h.phi if k == N else 1.0
        Ez, Einvz, Elogz = state.Ez[k - 1], state.Einvz[k - 1], state.Elogz[k - 1]
        cs = state.c_star[k - 1]
        if k % 2 == 1:
            prior_z += np.sum(ck * math.log(phik) - gammaln(ck) + (ck - 1) * Elogz - phik * Ez)
            lam, psi = ck - 0.5, 2.0 * phik
            omega = np.sqrt(cs * psi)
            ent_z += np.sum(-0.5 * lam * (math.log(psi) - np.log(cs)) + math.log(2.0)
                            + log_bessel_k(lam, omega) - (lam - 1) * Elogz
                            + 0.5 * (cs * Einvz + psi * Ez))
        else:
            prior_z += np.sum(ck * math.log(phik) - gammaln(ck) - (ck + 1) * Elogz - phik * Einvz)
            ak = ck + 0.5
            ent_z += np.sum(-ak * np.log(cs) + gammaln(ak) + (ak + 1) * Elogz + cs * Einvz)

    sign, logdet = np.linalg.slogdet(state.V)
    if sign <= 0:
        raise InferenceFault("V* is not positive definite")
    ent_beta = 0.5 * p * (1.0 + LOG_2PI) + 0.5 * logdet
    ent_s2 = -a * math.log(b) + gammaln(a) + (a + 1) * e_log_s2 + b * e_inv_s2
    return float(lik + prior_beta + prior_z + prior_s2 + ent_beta + ent_z + ent_s2)


def cavi_sweep(state, data, h):
    vb_update_beta(state, data, h)
    for k in range(1, h.depth + 1):
        vb_update_z_level(k, state, h)
    vb_update_sigma2(state, data, h)
    return state


def run_cavi(data, h, tol=1e-8, max_iters=500, init=None, v_scale="exact"):
    """Iterate CAVI sweeps until the relative ELBO change drops below ``tol``.

    Returns the final VariationalState; ``state.trace`` holds
    (sweep, elbo, max_abs_change_in_mu) tuples.
    """
    validate_hyperparameters(h, warn=False)
    state = init if init is not None else VariationalState.initial(data, h)
    state.v_scale = v_scale
    state.sigma2_shape = 0.5 * (data.n + data.p + 2.0 * h.c0)
    state.trace = []
    prev = None
    for sweep in range(1, max_iters + 1):
        mu_old = state.mu.copy()
        cavi_sweep(state, data, h)
        value = elbo(state, data, h)
        state.trace.append((sweep, value, float(np.max(np.abs(state.mu - mu_old)))))
        if prev is not None and abs(value - prev) <= tol * abs(value):
            break
        prev = value
    return state


def mfvb_update_c(state, h):
    """M-step for the shapes using the variational E[log z]."""
    if not np.all(np.isfinite(state.Elogz)):
        raise EMFault("non-finite variational E[log z]")
    p = state.Elogz.shape[1]
    new_c = []
    for k in range(1, h.depth + 1):
        sign = 1.0 if k % 2 == 1 else -1.0
        target = sign * state.Elogz[k - 1].sum()
        if k == h.depth:
            target += p * math.log(h.phi)
        new_c.append(float(np.clip(solve_digamma(target, p), *C_BOUNDS)))
    return h.with_c(new_c)


def run_mfvb_em(data, h, tol=1e-8, max_iters=500, max_rounds=20, c_tol=1e-3,
                v_scale="exact"):
    """Alternate full CAVI convergence with shape updates.

    Returns (state, h_final, trajectory) where trajectory lists c per round.
    """
    state = run_cavi(data, h, tol, max_iters, v_scale=v_scale)
    trajectory = [list(h.c)]
    for rnd in range(1, max_rounds + 1):
        new_h = mfvb_update_c(state, h)
        change = float(np.max(np.abs(np.subtract(new_h.c, h.c))))
        log.info("MFVB-EM round %d: c=%s max|dc|=%.3g", rnd, new_h.c, change)
        h = new_h
        trajectory.append(list(h.c))
        state = run_cavi(data, h, tol, max_iters, init=state, v_scale=v_scale)
        if change < c_tol:
            break
    return state, h, trajectory
