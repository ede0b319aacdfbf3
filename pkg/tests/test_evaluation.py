import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ncg import evaluation
from ncg.evaluation import (SIM1_BETA, FitResult, MethodConfig, Scenario, dataset_hash,
                            generate_scenario, method, model_error_mse, run_replications,
                            scenario_preset, selection_metrics)
from ncg.exceptions import SamplerFault, ValidationError
from ncg.gibbs import GibbsConfig, summarize
from ncg.model import Dataset

FAST = GibbsConfig(1500, 500)


def _corr(s, n=10_000):
    X = generate_scenario(s.with_(n_train=n, n_test=1), 0, 3)[0].X
    return np.corrcoef(X.T), np.cov(X.T)


def test_presets():
    assert scenario_preset("sim1").beta0 == SIM1_BETA
    assert scenario_preset("sim2").beta0 == (1.0,) + (0.0,) * 9
    assert scenario_preset("sim3").beta0 == (5.6, 5.6, 5.6, 0.0)
    s = scenario_preset("sim1", "II", sigma2=9.0)
    assert (s.covariance_case, s.sigma2, s.n_train, s.n_test) == ("ar1", 9.0, 20, 200)
    with pytest.raises(ValueError):
        scenario_preset("sim4")
    with pytest.raises(ValueError):
        scenario_preset("sim3", "II")


def test_identity_covariance():
    _, cov = _corr(scenario_preset("sim1", "I"))
    assert np.max(np.abs(cov - np.eye(10))) < 0.05


def test_ar1_covariance():
    R, _ = _corr(scenario_preset("sim1", "II"))
    assert R[0, 2] == pytest.approx(0.25, abs=0.03)


def test_equicorrelated_covariance():
    R, _ = _corr(scenario_preset("sim2", "III"))
    assert R[0, 7] == pytest.approx(0.5, abs=0.03)


def test_sim3_correlation():
    R, _ = _corr(scenario_preset("sim3"))
    assert R[0, 1] == pytest.approx(-0.39, abs=0.03)
    assert R[0, 3] == pytest.approx(0.23, abs=0.03)


def test_bad_covariance_rejected():
    s = Scenario("bad", (1.0, 0.0), covariance_case="custom", covariance=((1.0, 2.0), (2.0, 1.0)))
    with pytest.raises(ValidationError):
        generate_scenario(s, 0, 0)
    with pytest.raises(ValidationError):
        Scenario("bad", (1.0,), covariance_case="custom")
    with pytest.raises(ValidationError):
        Scenario("bad", (1.0,), sigma2=0.0)


def test_generation_deterministic_and_sized():
    s = scenario_preset("sim1", "III")
    a_tr, a_te = generate_scenario(s, 4, 99)
    b_tr, b_te = generate_scenario(s, 4, 99)
    assert dataset_hash(a_tr, a_te) == dataset_hash(b_tr, b_te)
    assert dataset_hash(a_tr, a_te) != dataset_hash(*generate_scenario(s, 5, 99))
    assert (a_tr.n, a_te.n, a_tr.p) == (20, 200, 10)
    np.testing.assert_array_equal(a_te.beta0, SIM1_BETA)


# metrics ------------------------------------------------------------------

def test_mse_examples():
    test = Dataset(np.ones((7, 1)), np.zeros(7), beta0=[0.3])
    assert model_error_mse([0.3], test) == 0.0
    assert model_error_mse([0.8], test) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        model_error_mse([0.0], Dataset(np.ones((2, 1)), np.zeros(2)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mse_quadratic_scaling(seed):
    rng = np.random.default_rng(seed)
    test = Dataset(rng.standard_normal((20, 4)), np.zeros(20), beta0=rng.standard_normal(4))
    err = rng.standard_normal(4)
    assert model_error_mse(test.beta0 + 2 * err, test) == pytest.approx(
        4 * model_error_mse(test.beta0 + err, test), rel=1e-10)


def test_selection_examples():
    assert selection_metrics((np.array([-1.0, -1.0]), np.array([1.0, 1.0])), [2.0, 0.0]) == (0, 1)
    assert selection_metrics((np.array([0.5, -3.0]), np.array([1.0, -1.0])), [2.0, -1.0]) == (0, 0)
    mask = np.zeros(10, bool)
    mask[[0, 3, 6, 8]] = True
    assert selection_metrics(mask, SIM1_BETA) == (1, 0)
    s = summarize(np.random.default_rng(0).normal([3.0, 0.0], 0.1, size=(500, 2)))
    assert selection_metrics(s, [2.0, 0.0]) == (0, 0)
    with pytest.raises(ValueError):
        selection_metrics(mask[:3], SIM1_BETA)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=30))
def test_selection_counting_identities(pairs):
    selected = np.array([a for a, _ in pairs])
    beta0 = np.array([1.0 if b else 0.0 for _, b in pairs])
    fp, fn = selection_metrics(selected, beta0)
    null = beta0 == 0
    assert fp + np.sum(~selected & null) == null.sum()
    assert fn + np.sum(selected & ~null) == (~null).sum()


def test_median_rule():
    fr = FitResult(np.zeros(3), -np.ones(3), np.ones(3), np.array([0.05, -0.2, 0.5]))
    assert list(fr.selected(method("ncg2", selection="median"))) == [False, True, True]
    assert not fr.selected(method("ncg2")).any()


def test_method_config():
    m = method("vb:horseshoe")
    assert (m.engine, m.preset, m.name) == ("vb", "horseshoe", "vb:horseshoe")
    assert method("ncg10").engine == "gibbs"
    for bad in ({"engine": "hmc"}, {"em": "mfvb"}, {"selection": "lasso"}):
        with pytest.raises(ValidationError):
            MethodConfig("x", **bad)


# harness ----------------------------------------------------------------------

def test_single_rep_sd_zero():
    r = run_replications(scenario_preset("sim1"), [method("ncg2", gibbs=FAST)], 1, reps=1)
    st_ = r.summary["ncg2"]
    assert st_["mse_sd"] == st_["fp_sd"] == st_["fn_sd"] == 0.0
    assert st_["n_ok"] == 1


def test_identical_methods_identical_columns():
    ms = [method("ncg2", gibbs=FAST, name="a"), method("ncg2", gibbs=FAST, name="b")]
    r = run_replications(scenario_preset("sim1"), ms, 2, reps=3)
    assert {k: v for k, v in r.summary["a"].items()} == r.summary["b"]
    by_rep = {}
    for rec in r.records:
        by_rep.setdefault(rec["rep"], set()).add(rec["dataset_hash"])
    assert all(len(v) == 1 for v in by_rep.values())


def test_report_deterministic_and_thread_independent():
    ms = [method("ncg2", gibbs=FAST), method("vb:ncg10")]
    s = scenario_preset("sim2", "II")
    a = run_replications(s, ms, 5, reps=4)
    b = run_replications(s, ms, 5, reps=4)
    c = run_replications(s, ms, 5, threads=2, reps=4)
    assert a.records == b.records == c.records
    assert a.summary == c.summary
    assert a.config_hash == c.config_hash
    for rec in a.records:
        assert 0 <= rec["fp"] <= 10 and 0 <= rec["fn"] <= 10
    assert "MSE (sd)" in a.table()
    assert [row["method"] for row in a.rows()] == ["ncg2", "vb:ncg10"]


def test_faults_are_recorded_and_excluded(monkeypatch):
    real = evaluation.fit_method

    def flaky(m, train, rng):
        if train.y[0] > 0:
            raise SamplerFault("synthetic", iteration=3)
        return real(m, train, rng)

    monkeypatch.setattr(evaluation, "fit_method", flaky)
    r = run_replications(scenario_preset("sim1"), [method("vb:ncg2")], 3, reps=6)
    bad = [rec for rec in r.records if rec["fault"]]
    assert bad and r.faults["vb:ncg2"] == len(bad)
    assert r.summary["vb:ncg2"]["n_ok"] == 6 - len(bad)
    assert "SamplerFault" in bad[0]["fault"]


def test_duplicate_method_names_rejected():
    with pytest.raises(ValueError):
        run_replications(scenario_preset("sim1"), ["ncg2", "ncg2"], 0, reps=1)


@pytest.mark.slow
def test_noise_increases_mse():
    ms = [method(p, gibbs=GibbsConfig(4000, 1000)) for p in ("ncg2", "ncg10", "horseshoe")]
    low = run_replications(scenario_preset("sim1", "I", sigma2=1.0), ms, 21, threads=4, reps=25)
    high = run_replications(scenario_preset("sim1", "I", sigma2=9.0), ms, 21, threads=4, reps=25)
    for m in ms:
        assert high.summary[m.name]["mse_mean"] > low.summary[m.name]["mse_mean"]
