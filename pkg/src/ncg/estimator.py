"""scikit-learn compatible wrapper around the Gibbs and variational engines."""

import numpy as np
from scipy.stats import norm
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .gibbs import GibbsConfig, McemConfig, run_gibbs, summarize
from .model import Dataset, Hyperparameters
from .vb import run_cavi, run_mfvb_em


class NCGRegressor(RegressorMixin, BaseEstimator):
    """Linear regression under a normal compound-gamma shrinkage prior.

    The model has no intercept: center ``y`` (and usually scale ``X``)
    before fitting.

    Parameters
    ----------
    engine : {"gibbs", "vb"}
        Posterior sampling or mean-field coordinate ascent.
    preset : {"ncg2", "ncg10", "horseshoe"}
        Depth preset with all shapes 1/2; ignored when ``c`` is given.
    c : sequence of float, optional
        Level shapes c_1..c_N.
    phi, c0, d0 : float
        Terminal rate and the inverse-gamma prior on the noise variance.
    n_iter, burn_in, thin : int
        Gibbs run length.
    em : {"off", "mcem", "mfvb"}
        Empirical-Bayes shape updates (mcem with gibbs, mfvb with vb).
    tol, max_iter : float, int
        CAVI stopping rule.
    level : float
        Credible level for ``coef_lower_`` / ``coef_upper_``.
    random_state : int, numpy Generator or None

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Posterior mean (gibbs) or variational mean (vb).
    coef_sd_, coef_lower_, coef_upper_ : ndarray
        Posterior spread and equal-tailed credible bounds.
    sigma2_ : float
        Posterior mean of the noise variance.
    c_ : tuple
        Level shapes after any empirical-Bayes updates.
    n_iter_ : int
        Gibbs iterations run, or CAVI sweeps until convergence.
    """

    def __init__(self, engine="gibbs", preset="ncg10", c=None, phi=1.0, c0=0.01, d0=0.01,
                 n_iter=15000, burn_in=2000, thin=1, em="off", tol=1e-8, max_iter=500,
                 level=0.95, random_state=None):
        self.engine = engine
        self.preset = preset
        self.c = c
        self.phi = phi
        self.c0 = c0
        self.d0 = d0
        self.n_iter = n_iter
        self.burn_in = burn_in
        self.thin = thin
        self.em = em
        self.tol = tol
        self.max_iter = max_iter
        self.level = level
        self.random_state = random_state

    def _hyperparameters(self):
        if self.c is not None:
            return Hyperparameters(c=tuple(self.c), phi=self.phi, c0=self.c0, d0=self.d0)
        return Hyperparameters.preset(self.preset, phi=self.phi, c0=self.c0, d0=self.d0)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=float, y_numeric=True)
        if self.engine not in ("gibbs", "vb"):
            raise ValueError(f"engine must be 'gibbs' or 'vb', got {self.engine!r}")
        if (self.em, self.engine) in (("mcem", "vb"), ("mfvb", "gibbs")):
            raise ValueError(f"em={self.em!r} does not apply to engine={self.engine!r}")
        data = Dataset(X, y)
        h = self._hyperparameters()
        if self.engine == "gibbs":
            mcem = McemConfig() if self.em == "mcem" else None
            cfg = GibbsConfig(self.n_iter, self.burn_in, self.thin, mcem)
            draws = run_gibbs(data, h, cfg, np.random.default_rng(self.random_state))
            s = summarize(draws, self.level)
            self.coef_, self.coef_sd_ = s.mean, s.sd
            self.coef_lower_, self.coef_upper_ = s.lower, s.upper
            self.sigma2_ = float(draws.sigma2_draws.mean())
            self.c_ = draws.hyperparameters.c
            self.draws_ = draws
            self.n_iter_ = cfg.total_iters
        else:
            if self.em == "mfvb":
                state, h, _ = run_mfvb_em(data, h, self.tol, self.max_iter)
            else:
                state = run_cavi(data, h, self.tol, self.max_iter)
            sd = np.sqrt(np.diag(state.V))
            zq = norm.ppf(0.5 + 0.5 * self.level)
            self.coef_, self.coef_sd_ = state.mu.copy(), sd
            self.coef_lower_, self.coef_upper_ = state.mu - zq * sd, state.mu + zq * sd
            a = state.sigma2_shape
            self.sigma2_ = state.d0_star / (a - 1.0) if a > 1 else float("inf")
            self.c_ = h.c
            self.state_ = state
            self.n_iter_ = len(state.trace)
        return self

    @property
    def selected_(self):
        """Coefficients whose credible interval excludes zero."""
        check_is_fitted(self, "coef_")
        return (self.coef_lower_ > 0) | (self.coef_upper_ < 0)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=float, reset=False)
        return X @ self.coef_
