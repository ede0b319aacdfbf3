import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import digamma

from ncg.evaluation import generate_scenario, scenario_preset
from ncg.exceptions import EMFault, InferenceFault
from ncg.gibbs import GibbsConfig, mcem_update_c, run_gibbs, summarize
from ncg.model import Dataset, Hyperparameters
from ncg.special import GigParams, gig_moments
from ncg.vb import (VariationalState, _level_moments, cavi_sweep, elbo, mfvb_update_c,
                    run_cavi, run_mfvb_em, vb_update_beta, vb_update_sigma2, vb_update_z_level)

from oracles import SMALL_X, SMALL_Y, SmallPosterior


def _toy(seed, n=30, p=4, beta=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.r_[2.0, -1.0, np.zeros(p - 2)] if beta is None else beta
    return Dataset(X, X @ beta + rng.standard_normal(n))


# beta factor ---------------------------------------------------------------

def test_beta_zero_design_is_prior_factor():
    data = Dataset(np.zeros((5, 3)), np.ones(5))
    h = Hyperparameters(c=(1.0, 1.0))
    s = VariationalState.initial(data, h)
    s.Einvz = np.array([[2.0, 0.5, 1.0], [1.5, 3.0, 4.0]])
    mu, V = vb_update_beta(s, data, h)
    assert np.all(mu == 0)
    np.testing.assert_allclose(V, np.diag(1.0 / s.E_inv_sigma2 / s.Einvz.prod(axis=0)), rtol=1e-12)


def test_beta_flat_prior_limit_is_ols():
    data = _toy(0)
    s = VariationalState.initial(data, Hyperparameters(c=(1.0,)))
    s.Einvz[:] = 1e-14
    mu, _ = vb_update_beta(s, data)
    np.testing.assert_allclose(mu, np.linalg.lstsq(data.X, data.y, rcond=None)[0], atol=1e-9)


@pytest.mark.parametrize("v_scale", ["exact", "mean"])
def test_beta_dense_formula(v_scale):
    X = np.array([[1.0, 0.3], [0.2, -1.1], [0.7, 0.4]])
    y = np.array([0.5, -0.2, 1.4])
    data = Dataset(X, y)
    s = VariationalState.initial(data, Hyperparameters(c=(1.0, 1.0)))
    s.v_scale = v_scale
    s.Einvz = np.array([[1.3, 0.4], [2.0, 0.9]])
    s.E_inv_sigma2, s.d0_star, s.sigma2_shape = 1.7, 3.0, 4.0
    lam_inv = np.array([1.3 * 2.0, 0.4 * 0.9])
    A = np.array([[X[:, 0] @ X[:, 0] + lam_inv[0], X[:, 0] @ X[:, 1]],
                  [X[:, 0] @ X[:, 1], X[:, 1] @ X[:, 1] + lam_inv[1]]])
    det = A[0, 0] * A[1, 1] - A[0, 1] ** 2
    Ainv = np.array([[A[1, 1], -A[0, 1]], [-A[0, 1], A[0, 0]]]) / det
    scale = 1 / 1.7 if v_scale == "exact" else 3.0 / 3.0
    mu, V = vb_update_beta(s, data)
    np.testing.assert_allclose(mu, Ainv @ (X.T @ y), atol=1e-10)
    np.testing.assert_allclose(V, scale * Ainv, atol=1e-10)
    np.testing.assert_allclose(s.Eb2, mu**2 + np.diag(V), atol=1e-12)


def test_beta_singular_system_faults():
    data = Dataset(np.zeros((3, 2)), np.ones(3))
    s = VariationalState.initial(data, Hyperparameters(c=(1.0,)))
    s.Einvz[:] = 0.0
    with pytest.raises(InferenceFault):
        vb_update_beta(s, data)


# scale factors ---------------------------------------------------------------

def test_z_odd_level_zero_signal_is_gamma():
    data = Dataset(np.zeros((3, 2)), np.zeros(3))
    h = Hyperparameters(c=(2.5, 1.0, 1.5), phi=2.0)
    s = VariationalState.initial(data, h)
    s.mu[:], s.V[:] = 0.0, 0.0
    vb_update_z_level(1, s, h)
    np.testing.assert_allclose(s.Ez[0], 2.0, rtol=1e-9)          # Gamma(2, rate 1)
    np.testing.assert_allclose(s.Elogz[0], digamma(2.0), atol=1e-9)
    vb_update_z_level(3, s, h)
    np.testing.assert_allclose(s.Ez[2], 1.0 / 2.0, rtol=1e-9)    # Gamma(1, rate phi)


def test_z_even_level_zero_signal():
    data = Dataset(np.zeros((3, 2)), np.zeros(3))
    h = Hyperparameters(c=(1.0, 1.7))
    s = VariationalState.initial(data, h)
    s.mu[:], s.V[:] = 0.0, 0.0
    row = vb_update_z_level(2, s, h)
    assert np.all(row == 1.0)
    np.testing.assert_allclose(s.Einvz[1], 2.2, rtol=1e-14)


def test_z_level_c_star_formula():
    data = _toy(1)
    h = Hyperparameters(c=(0.8, 1.4, 0.6), phi=1.5)
    s = run_cavi(data, h, max_iters=5)
    rest = s.Einvz[1] * s.Einvz[2]
    row = vb_update_z_level(1, s, h)
    np.testing.assert_allclose(row, s.Eb2 * s.E_inv_sigma2 * rest, rtol=1e-14)
    rest = s.Einvz[0] * s.Einvz[2]
    row = vb_update_z_level(2, s, h)
    np.testing.assert_allclose(row, 0.5 * s.Eb2 * s.E_inv_sigma2 * rest + 1.0, rtol=1e-14)
    rest = s.Einvz[0] * s.Einvz[1]
    row = vb_update_z_level(3, s, h)
    np.testing.assert_allclose(row, s.Eb2 * s.E_inv_sigma2 * rest, rtol=1e-14)


def test_moment_cache_coherent():
    data = _toy(2)
    h = Hyperparameters(c=(0.7, 1.3, 0.9, 2.0), phi=1.8)
    s = run_cavi(data, h, max_iters=20)
    for k in range(1, 5):
        Ez, Einvz, Elogz = _level_moments(k, s.c_star[k - 1], h)
        assert np.array_equal(Ez, s.Ez[k - 1])
        assert np.array_equal(Einvz, s.Einvz[k - 1])
        assert np.array_equal(Elogz, s.Elogz[k - 1])
    for j in range(data.p):
        ref = gig_moments(GigParams(0.7 - 0.5, s.c_star[0, j], 2.0))
        np.testing.assert_allclose([s.Ez[0, j], s.Einvz[0, j], s.Elogz[0, j]], ref, rtol=1e-12)
        a, cs = 2.0 + 0.5, s.c_star[3, j]
        np.testing.assert_allclose([s.Einvz[3, j], s.Elogz[3, j]],
                                   [a / cs, np.log(cs) - digamma(a)], rtol=1e-12)


def test_even_level_log_mean_against_draws():
    a, cs = 1.2 + 0.5, 0.8
    draws = stats.invgamma(a, scale=cs).rvs(size=1_000_000, random_state=np.random.default_rng(3))
    _, _, elog = _level_moments(2, np.array([cs]), Hyperparameters(c=(1.0, 1.2)))
    assert abs(np.log(draws).mean() - elog[0]) < 0.005


# noise factor ----------------------------------------------------------------

def test_sigma2_prior_only():
    data = Dataset(np.ones((4, 2)), np.zeros(4))
    h = Hyperparameters(c=(1.0,), d0=0.37)
    s = VariationalState.initial(data, h)
    s.mu[:], s.V[:] = 0.0, 0.0
    assert vb_update_sigma2(s, data, h)[0] == pytest.approx(0.37, abs=1e-15)


def test_sigma2_arithmetic_example():
    data = Dataset(np.array([[1.0]]), np.array([2.0]))
    h = Hyperparameters(c=(1.0,), d0=0.0)
    s = VariationalState.initial(data, h)
    s.mu, s.V, s.Einvz = np.array([1.0]), np.array([[0.5]]), np.ones((1, 1))
    assert vb_update_sigma2(s, data, h)[0] == pytest.approx(1.5, abs=1e-15)
    s.mu = np.array([np.nan])
    with pytest.raises(InferenceFault):
        vb_update_sigma2(s, data, h)


def test_sigma2_shape_identity_along_run():
    data = _toy(4)
    h = Hyperparameters(c=(0.9, 1.1))
    s = VariationalState.initial(data, h)
    for _ in range(10):
        cavi_sweep(s, data, h)
        assert s.E_inv_sigma2 * s.d0_star == pytest.approx((30 + 4 + 0.02) / 2, rel=1e-14)


# ELBO and CAVI ---------------------------------------------------------------

CASES = [
    (0, Hyperparameters.preset("ncg2")),
    (1, Hyperparameters.preset("ncg10")),
    (2, Hyperparameters.preset("horseshoe")),
    (3, Hyperparameters(c=(1.5, 2.0, 0.7), phi=2.0, c0=1.0, d0=1.0)),
    (4, Hyperparameters(c=(0.3,), phi=0.5)),
]


@pytest.mark.parametrize("seed, h", CASES)
def test_elbo_monotone_and_v_psd(seed, h):
    data = _toy(seed, n=25, p=6)
    s = VariationalState.initial(data, h)
    prev = -np.inf
    for _ in range(150):
        cavi_sweep(s, data, h)
        assert np.max(np.abs(s.V - s.V.T)) <= 1e-10
        assert np.linalg.eigvalsh(s.V).min() >= -1e-10
        assert np.all(s.c_star > 0)
        value = elbo(s, data, h)
        assert value >= prev - 1e-8
        prev = value


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 40), st.integers(1, 6),
       st.lists(st.floats(0.2, 3.0), min_size=1, max_size=5))
def test_elbo_monotone_property(seed, n, p, c):
    data = _toy(seed, n=n, p=p, beta=np.random.default_rng(seed).standard_normal(p))
    s = run_cavi(data, Hyperparameters(c=tuple(c)), tol=1e-12, max_iters=60)
    values = np.array([t[1] for t in s.trace])
    assert np.all(np.diff(values) >= -1e-8 * np.maximum(1.0, np.abs(values[1:])))


def test_zero_column_shifts_elbo_by_data_free_constant():
    h = Hyperparameters(c=(1.5, 2.0))
    shifts = []
    for seed in range(3):
        data = _toy(seed, p=3)
        wide = Dataset(np.c_[data.X, np.zeros(data.n)], data.y)
        a = run_cavi(data, h, tol=1e-14, max_iters=5000)
        b = run_cavi(wide, h, tol=1e-14, max_iters=5000)
        np.testing.assert_allclose(b.mu[:3], a.mu, atol=1e-6)
        assert b.mu[3] == 0.0
        shifts.append(b.trace[-1][1] - a.trace[-1][1])
    assert np.ptp(shifts) < 1e-6


def test_small_instance_against_quadrature():
    oracle = SmallPosterior(SMALL_X, SMALL_Y)
    data = Dataset(SMALL_X[:, None], SMALL_Y)
    s = run_cavi(data, Hyperparameters(c=(1.0, 1.0), phi=1.0, c0=1.0, d0=1.0), tol=1e-12)
    assert abs(s.mu[0] - oracle.mean) < 0.05
    assert s.trace[-1][1] <= oracle.log_evidence + 1e-6


def test_run_cavi_deterministic_and_trace():
    data = _toy(5)
    h = Hyperparameters.preset("ncg2")
    a, b = run_cavi(data, h), run_cavi(data, h)
    assert np.array_equal(a.mu, b.mu) and np.array_equal(a.V, b.V)
    assert a.trace == b.trace
    sweeps = [t[0] for t in a.trace]
    assert sweeps == list(range(1, len(sweeps) + 1))
    assert len(run_cavi(data, h, tol=0.0, max_iters=7).trace) == 7


def test_sim3_recovery_and_gibbs_agreement():
    train, _ = generate_scenario(scenario_preset("sim3", n_train=250), 0, 11)
    h = Hyperparameters.preset("ncg10")
    s = run_cavi(train, h)
    assert np.all(np.abs(s.mu - np.array([5.6, 5.6, 5.6, 0.0])) < 0.3)
    g = summarize(run_gibbs(train, h, GibbsConfig(), np.random.default_rng(0)))
    assert np.max(np.abs(g.mean - s.mu)) < 0.1


def test_state_dict_fields():
    data = _toy(6)
    h = Hyperparameters(c=(1.0, 1.0))
    d = run_cavi(data, h, max_iters=3).to_dict(h)
    assert set(d) == {"mu_star", "V_star_diag", "c_star", "d0_star", "E_inv_sigma2", "c"}


# MFVB-EM ---------------------------------------------------------------------

def test_mfvb_fixed_point():
    data = Dataset(np.zeros((2, 5)), np.zeros(2))
    h = Hyperparameters(c=(0.3,))
    s = VariationalState.initial(data, h)
    s.Elogz[:] = digamma(0.7)
    assert mfvb_update_c(s, h).c[0] == pytest.approx(0.7, rel=1e-9)
    s.Elogz[0, 0] = np.inf
    with pytest.raises(EMFault):
        mfvb_update_c(s, h)


def test_mfvb_and_mcem_steps_agree():
    # one M-step from the same shapes, each engine supplying its own E[log z]
    data = _toy(0, n=200, p=10, beta=np.r_[3.0, 1.5, 0, 0, 2.0, np.zeros(5)])
    h = Hyperparameters(c=(1.0, 1.0))
    c_vb = mfvb_update_c(run_cavi(data, h), h).c
    draws = run_gibbs(data, h, GibbsConfig(6000, 1000), np.random.default_rng(1))
    c_mc = mcem_update_c(draws.z_log_means, h).c
    assert np.max(np.abs(np.subtract(c_vb, c_mc))) < 0.1


def test_run_mfvb_em_bookkeeping():
    data = _toy(7, n=60, p=5)
    state, h, traj = run_mfvb_em(data, Hyperparameters(c=(1.0, 1.0)), max_rounds=4)
    assert 2 <= len(traj) <= 5
    assert list(h.c) == traj[-1]
    arr = np.array(traj)
    assert np.all((arr >= 1e-3) & (arr <= 1e3))
    assert np.all(np.isfinite(state.mu))
