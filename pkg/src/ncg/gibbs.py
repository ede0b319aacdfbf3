"""Blocked Gibbs sampler for the normal compound-gamma regression model.

Each coefficient j carries its own chain of N scales z_{1j}..z_{Nj}; the
prior variance of beta_j is sigma2 * prod_k z_kj. One sweep draws beta
jointly, then the scale levels k = 1..N, then sigma2.
"""

from dataclasses import dataclass, field
import logging

import numpy as np

from . import _kernels
from .exceptions import EMFault, SamplerFault
from .model import GibbsState, Hyperparameters, PosteriorDraws, validate_hyperparameters
from .special import solve_digamma

log = logging.getLogger(__name__)

C_BOUNDS = (1e-3, 1e3)


@dataclass(frozen=True)
class McemConfig:
    window: int = 500
    max_rounds: int = 20
    tol: float = 1e-3


@dataclass(frozen=True)
class GibbsConfig:
    total_iters: int = 15000
    burn_in: int = 2000
    thin: int = 1
    mcem: McemConfig = None
    seed: int = 0

    def __post_init__(self):
        if self.total_iters < 1:
            raise ValueError("total_iters must be positive")
        if not 0 <= self.burn_in < self.total_iters:
            raise ValueError("burn_in must satisfy 0 <= burn_in < total_iters")
        if self.thin < 1:
            raise ValueError("thin must be positive")

    @property
    def kept(self):
        return self.total_iters - self.burn_in

    def to_dict(self):
        d = {"total_iters": self.total_iters, "burn_in": self.burn_in,
             "thin": self.thin, "seed": self.seed, "mcem": None}
        if self.mcem is not None:
            d["mcem"] = {"window": self.mcem.window, "max_rounds": self.mcem.max_rounds,
                         "tol": self.mcem.tol}
        return d


@dataclass
class Summary:
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95
    median: np.ndarray = field(default=None, repr=False)

    def excludes_zero(self):
        return (self.lower > 0) | (self.upper < 0)


def _precompute(data):
    X = np.ascontiguousarray(data.X)
    y = np.ascontiguousarray(data.y)
    return X, y, X.T @ X, X.T @ y


def update_beta(state, data, rng):
    """Draw beta ~ N(Sigma^-1 X'y, sigma2 Sigma^-1) with Sigma = X'X + Z^-1."""
    _, _, XtX, Xty = _precompute(data)
    out = np.empty(data.p)
    ok = _kernels.update_beta(rng, XtX, Xty, np.ascontiguousarray(state.z), float(state.sigma2), out)
    if not ok:
        raise SamplerFault("precision matrix X'X + Z^-1 is not positive definite")
    return out


def update_z_level(k, state, rng, h):
    """New row for level k (1-based) of the scale matrix.

    Odd k: GIG(c_k - 1/2, q_j, 2 phi_k); even k: IG(c_k + 1/2, q_j/2 + phi_k),
    with q_j = beta_j^2 / (sigma2 prod_{i != k} z_ij) and phi_k = phi only at
    the last level. Returns (row, clamp_count).
    """
    if not 1 <= k <= h.depth:
        raise ValueError(f"level k must be in 1..{h.depth}, got {k}")
    z = np.array(state.z, dtype=float, copy=True)
    clamps = _kernels.update_z_level(rng, k - 1, np.asarray(state.beta, dtype=float), z,
                                     float(state.sigma2), np.asarray(h.c), float(h.phi))
    return z[k - 1].copy(), int(clamps)


def sigma2_conditional(state, data, h):
    """(shape, scale) of the inverse-gamma full conditional of sigma2."""
    return _kernels.sigma2_posterior(np.ascontiguousarray(data.X), data.y,
                                     np.asarray(state.beta, dtype=float),
                                     np.ascontiguousarray(state.z), h.c0, h.d0)


def update_sigma2(state, data, rng, h):
    return float(_kernels.update_sigma2(rng, np.ascontiguousarray(data.X), data.y,
                                        np.asarray(state.beta, dtype=float),
                                        np.ascontiguousarray(state.z), h.c0, h.d0))


def gibbs_step(state, data, h, rng):
    """One full sweep (beta, z_1..z_N, sigma2) applied to ``state`` in place."""
    _run_block(state, data, h, rng, n_iter=1, n_skip=1, thin=1)
    return state


def _run_block(state, data, h, rng, n_iter, n_skip, thin, precomputed=None):
    X, y, XtX, Xty = precomputed or _precompute(data)
    n_store = 0 if n_iter <= n_skip else -(-(n_iter - n_skip) // thin)
    beta_out = np.empty((n_store, data.p))
    sigma2_out = np.empty(n_store)
    logz_sum = np.zeros_like(state.z)
    status, sigma2, clamps = _kernels.gibbs_run(
        rng, X, y, XtX, Xty, state.beta, state.z, float(state.sigma2),
        np.asarray(h.c, dtype=float), float(h.phi), float(h.c0), float(h.d0),
        int(n_iter), int(n_skip), int(thin), beta_out, sigma2_out, logz_sum)
    state.sigma2 = float(sigma2)
    if status >= 0:
        raise SamplerFault("Gibbs update failed (non-PD precision or invalid sigma2)",
                           iteration=int(status))
    return beta_out, sigma2_out, logz_sum, int(clamps)


def mcem_update_c(window_logz, h):
    """M-step for the level shapes.

    ``window_logz[k, j]`` is the window average of log z_kj. Each level solves
    p * digamma(c_k) = sum_j (-1)^(k+1) mean log z_kj + [k == N] p log(phi);
    results are clamped to [1e-3, 1e3].
    """
    window_logz = np.asarray(window_logz, dtype=float)
    if window_logz.ndim != 2 or window_logz.shape[0] != h.depth:
        raise EMFault(f"expected an ({h.depth}, p) array of log-scale means")
    if not np.all(np.isfinite(window_logz)):
        raise EMFault("non-finite log-scale statistic in MCEM window")
    p = window_logz.shape[1]
    new_c = []
    for k in range(1, h.depth + 1):
        sign = 1.0 if k % 2 == 1 else -1.0
        target = sign * window_logz[k - 1].sum()
        if k == h.depth:
            target += p * np.log(h.phi)
        new_c.append(float(np.clip(solve_digamma(target, p), *C_BOUNDS)))
    return h.with_c(new_c)


def run_gibbs(data, h, cfg=None, rng=None, init=None):
    """Run the sampler and return the kept draws.

    Parameters
    ----------
    data : Dataset
    h : Hyperparameters
    cfg : GibbsConfig, optional
        Defaults to 15000 iterations with 2000 burn-in.
    rng : numpy.random.Generator, optional
        Built from ``cfg.seed`` when omitted.
    init : GibbsState, optional
        Starting point; defaults to beta = 0, z = 1, sigma2 = var(y).

    With ``cfg.mcem`` set, EM rounds of ``window`` sweeps follow burn-in and
    update the shapes after each round; the kept draws are then generated
    with the final shapes.
    """
    cfg = cfg or GibbsConfig()
    validate_hyperparameters(h, warn=False)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    state = init.copy() if init is not None else GibbsState.initial(data, h.depth)
    pre = _precompute(data)
    clamps = 0

    if cfg.burn_in:
        *_, c = _run_block(state, data, h, rng, cfg.burn_in, cfg.burn_in, 1, pre)
        clamps += c

    trajectory = [list(h.c)]
    if cfg.mcem is not None:
        for rnd in range(1, cfg.mcem.max_rounds + 1):
            _, _, logz_sum, c = _run_block(state, data, h, rng, cfg.mcem.window, 0,
                                           cfg.mcem.window, pre)
            clamps += c
            new_h = mcem_update_c(logz_sum / cfg.mcem.window, h)
            change = float(np.max(np.abs(np.subtract(new_h.c, h.c))))
            log.info("MCEM round %d: c=%s max|dc|=%.3g", rnd, new_h.c, change)
            h = new_h
            trajectory.append(list(h.c))
            if change < cfg.mcem.tol:
                break

    beta_out, sigma2_out, logz_sum, c = _run_block(state, data, h, rng, cfg.kept, 0,
                                                   cfg.thin, pre)
    clamps += c
    if clamps:
        log.warning("%d scale draws hit the [1e-12, 1e12] clamp", clamps)
    return PosteriorDraws(beta_draws=beta_out, sigma2_draws=sigma2_out,
                          z_log_means=logz_sum / cfg.kept, clamp_events=clamps,
                          hyperparameters=h, em_trajectory=trajectory, final_state=state)


def summarize(draws, level=0.95):
    """Posterior mean, sd and equal-tailed credible interval per coefficient."""
    arr = draws.beta_draws if isinstance(draws, PosteriorDraws) else np.asarray(draws, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.shape[0] == 0:
        raise ValueError("cannot summarise an empty set of draws")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if arr.shape[0] < 100:
        log.warning("summarising only %d draws", arr.shape[0])
    alpha = 0.5 * (1.0 - level)
    lower, median, upper = np.quantile(arr, [alpha, 0.5, 1.0 - alpha], axis=0)
    sd = arr.std(axis=0, ddof=1) if arr.shape[0] > 1 else np.zeros(arr.shape[1])
    return Summary(mean=arr.mean(axis=0), sd=sd, lower=lower, upper=upper,
                   level=level, median=median)


__all__ = [
    "GibbsConfig", "McemConfig", "Summary", "Hyperparameters",
    "update_beta", "update_z_level", "update_sigma2", "sigma2_conditional",
    "gibbs_step", "run_gibbs", "mcem_update_c", "summarize",
]
