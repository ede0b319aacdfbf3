"""Simulation scenarios, accuracy metrics and the replication harness."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
import hashlib
import json
import logging
import math

import numpy as np
from scipy.stats import norm

from .exceptions import ValidationError
from .gibbs import GibbsConfig, McemConfig, run_gibbs, summarize
from .model import Dataset, Hyperparameters
from .vb import run_cavi, run_mfvb_em

log = logging.getLogger(__name__)

SIM1_BETA = (2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0)
SIM2_BETA = (1.0,) + (0.0,) * 9
SIM3_BETA = (5.6, 5.6, 5.6, 0.0)
COVARIANCE_CASES = ("identity", "ar1", "equi", "custom")


def sim3_correlation():
    """Correlation matrix with -0.39 among x1..x3 and 0.23 between each and x4."""
    R = np.full((4, 4), -0.39)
    R[:3, 3] = R[3, :3] = 0.23
    np.fill_diagonal(R, 1.0)
    return R


@dataclass(frozen=True)
class Scenario:
    name: str
    beta0: tuple
    sigma2: float = 1.0
    covariance_case: str = "identity"
    n_train: int = 20
    n_test: int = 200
    replications: int = 100
    rho: float = 0.5
    covariance: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "beta0", tuple(float(b) for b in self.beta0))
        if self.covariance is not None:
            object.__setattr__(self, "covariance",
                               tuple(tuple(float(v) for v in row) for row in self.covariance))
        failures = []
        if self.covariance_case not in COVARIANCE_CASES:
            failures.append(f"covariance_case must be one of {COVARIANCE_CASES}")
        if self.covariance_case == "custom" and self.covariance is None:
            failures.append("custom covariance_case needs a covariance matrix")
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            failures.append("sigma2 must be positive")
        for name in ("n_train", "n_test", "replications"):
            if getattr(self, name) < 1:
                failures.append(f"{name} must be positive")
        if failures:
            raise ValidationError(failures)

    @property
    def p(self):
        return len(self.beta0)

    def covariance_matrix(self):
        p = self.p
        if self.covariance_case == "identity":
            S = np.eye(p)
        elif self.covariance_case == "ar1":
            idx = np.arange(p)
            S = self.rho ** np.abs(idx[:, None] - idx[None, :])
        elif self.covariance_case == "equi":
            S = np.full((p, p), self.rho)
            np.fill_diagonal(S, 1.0)
        else:
            S = np.array(self.covariance, dtype=float)
            if S.shape != (p, p):
                raise ValidationError([f"covariance must be {p}x{p}, got {S.shape}"])
        if not np.allclose(S, S.T):
            raise ValidationError(["covariance matrix is not symmetric"])
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise ValidationError(["covariance matrix is not positive definite"]) from None
        return S

    def with_(self, **kw):
        return replace(self, **kw)

    def to_dict(self):
        return asdict(self)


SCENARIOS = {
    "sim1": Scenario("sim1", SIM1_BETA),
    "sim2": Scenario("sim2", SIM2_BETA),
    "sim3": Scenario("sim3", SIM3_BETA, covariance_case="custom",
                     covariance=tuple(map(tuple, sim3_correlation()))),
}
CASES = {"I": "identity", "II": "ar1", "III": "equi"}


def scenario_preset(name, case=None, **overrides):
    """Named scenario; ``case`` picks I/II/III covariance for sim1 and sim2."""
    try:
        s = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    if case is not None:
        if name == "sim3":
            raise ValueError("sim3 has a fixed correlation matrix")
        s = s.with_(covariance_case=CASES.get(case, case))
    return s.with_(**overrides) if overrides else s


def data_seed(base_seed, rep_index):
    return np.random.SeedSequence([int(base_seed), int(rep_index)])


def generate_scenario(s, rep_index, base_seed):
    """Draw (train, test) for replication ``rep_index``.

    Rows are N(0, Sigma) through the Cholesky factor and y = X beta0 + eps
    with eps ~ N(0, sigma2). The stream depends only on (base_seed, rep_index).
    """
    L = np.linalg.cholesky(s.covariance_matrix())
    rng = np.random.default_rng(data_seed(base_seed, rep_index))
    beta0 = np.asarray(s.beta0)
    sd = math.sqrt(s.sigma2)

    def draw(n):
        X = rng.standard_normal((n, s.p)) @ L.T
        y = X @ beta0 + sd * rng.standard_normal(n)
        return Dataset(X, y, beta0=beta0.copy(), sigma0sq=s.sigma2)

    train = draw(s.n_train)
    test = draw(s.n_test)
    return train, test


def dataset_hash(*datasets):
    h = hashlib.sha256()
    for d in datasets:
        h.update(np.ascontiguousarray(d.X).tobytes())
        h.update(np.ascontiguousarray(d.y).tobytes())
    return h.hexdigest()[:16]


def model_error_mse(beta_hat, test):
    """(1/n_test) ||X_test (beta_hat - beta0)||^2, error against the noiseless signal."""
    if not test.has_truth:
        raise ValueError("test dataset carries no true coefficients")
    diff = test.X @ (np.asarray(beta_hat, dtype=float) - test.beta0)
    return float(diff @ diff / test.n)


def selection_metrics(summary, beta0):
    """(false positives, false negatives) for a selection.

    ``summary`` is a Summary (selection = interval excludes zero), a
    (lower, upper) pair, or a boolean mask of selected coefficients.
    """
    beta0 = np.asarray(beta0, dtype=float)
    if hasattr(summary, "excludes_zero"):
        selected = summary.excludes_zero()
    elif isinstance(summary, tuple) and len(summary) == 2:
        lower, upper = (np.asarray(a, dtype=float) for a in summary)
        selected = (lower > 0) | (upper < 0)
    else:
        selected = np.asarray(summary, dtype=bool)
    if selected.shape != beta0.shape:
        raise ValueError("selection and truth differ in length")
    null = beta0 == 0
    return int(np.sum(selected & null)), int(np.sum(~selected & ~null))


@dataclass(frozen=True)
class MethodConfig:
    """One inference engine plus its settings.

    ``selection`` is ``"ci"`` (equal-tailed interval at ``level`` excludes 0)
    or ``"median"`` (|posterior median| > ``threshold``).
    """

    name: str
    engine: str = "gibbs"
    preset: str = "ncg10"
    c: tuple = None
    phi: float = 1.0
    c0: float = 0.01
    d0: float = 0.01
    gibbs: GibbsConfig = field(default_factory=GibbsConfig)
    em: str = "off"
    cavi_tol: float = 1e-8
    cavi_max_iters: int = 500
    selection: str = "ci"
    level: float = 0.95
    threshold: float = 0.1
    seed: int = 0

    def __post_init__(self):
        failures = []
        if self.engine not in ("gibbs", "vb"):
            failures.append(f"engine must be gibbs or vb, got {self.engine!r}")
        if self.em not in ("off", "mcem", "mfvb"):
            failures.append(f"em must be off, mcem or mfvb, got {self.em!r}")
        if (self.em, self.engine) in (("mcem", "vb"), ("mfvb", "gibbs")):
            failures.append(f"em={self.em} does not apply to engine={self.engine}")
        if self.selection not in ("ci", "median"):
            failures.append("selection must be ci or median")
        if failures:
            raise ValidationError(failures)

    def hyperparameters(self):
        if self.c is not None:
            return Hyperparameters(c=tuple(self.c), phi=self.phi, c0=self.c0, d0=self.d0)
        return Hyperparameters.preset(self.preset, phi=self.phi, c0=self.c0, d0=self.d0)

    def to_dict(self):
        d = asdict(self)
        d["gibbs"] = self.gibbs.to_dict()
        d["hyperparameters"] = self.hyperparameters().to_dict()
        return d


def method(spec, **kw):
    """Build a MethodConfig from ``"preset"`` or ``"engine:preset"``."""
    engine, _, preset = spec.rpartition(":")
    engine = engine or kw.pop("engine", "gibbs")
    return MethodConfig(name=kw.pop("name", preset if engine == "gibbs" else spec),
                        engine=engine, preset=preset, **kw)


DEFAULT_METHODS = ("ncg2", "ncg10", "horseshoe")


@dataclass
class FitResult:
    beta_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    median: np.ndarray
    info: dict = field(default_factory=dict)

    def selected(self, m):
        if m.selection == "median":
            return np.abs(self.median) > m.threshold
        return (self.lower > 0) | (self.upper < 0)


def fit_method(m, train, rng):
    """Fit ``train`` with method ``m``; posterior means plus intervals."""
    h = m.hyperparameters()
    if m.engine == "gibbs":
        cfg = m.gibbs
        if m.em == "mcem" and cfg.mcem is None:
            cfg = replace(cfg, mcem=McemConfig())
        elif m.em == "off" and cfg.mcem is not None:
            cfg = replace(cfg, mcem=None)
        draws = run_gibbs(train, h, cfg, rng)
        s = summarize(draws, m.level)
        info = {"clamp_events": draws.clamp_events, "c": list(draws.hyperparameters.c)}
        return FitResult(s.mean, s.lower, s.upper, s.median, info)
    if m.em == "mfvb":
        state, h, _ = run_mfvb_em(train, h, m.cavi_tol, m.cavi_max_iters)
    else:
        state = run_cavi(train, h, m.cavi_tol, m.cavi_max_iters)
    sd = np.sqrt(np.diag(state.V))
    zq = norm.ppf(0.5 + 0.5 * m.level)
    info = {"sweeps": len(state.trace), "elbo": state.trace[-1][1], "c": list(h.c)}
    return FitResult(state.mu.copy(), state.mu - zq * sd, state.mu + zq * sd, state.mu.copy(), info)


def fit_seed(base_seed, rep_index, method_seed):
    return np.random.SeedSequence([int(base_seed), int(rep_index), int(method_seed)])


def _run_one(args):
    s, methods, base_seed, rep = args
    train, test = generate_scenario(s, rep, base_seed)
    dh = dataset_hash(train, test)
    log.debug("rep %d dataset %s", rep, dh)
    rows = []
    for m in methods:
        row = {"rep": rep, "method": m.name, "dataset_hash": dh}
        try:
            res = fit_method(m, train, np.random.default_rng(fit_seed(base_seed, rep, m.seed)))
            fp, fn = selection_metrics(res.selected(m), s.beta0)
            row.update(mse=model_error_mse(res.beta_hat, test), fp=fp, fn=fn, fault="")
        except Exception as exc:  # recorded per rep, excluded from aggregates
            log.warning("rep %d method %s failed: %s", rep, m.name, exc)
            row.update(mse=math.nan, fp=-1, fn=-1, fault=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return rows


def _mean_sd(values):
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


@dataclass
class RunReport:
    scenario: dict
    methods: list
    base_seed: int
    summary: dict
    records: list
    faults: dict

    METRICS = ("mse", "fp", "fn")

    @property
    def config_hash(self):
        blob = json.dumps({"scenario": self.scenario, "methods": self.methods,
                           "base_seed": self.base_seed}, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def metadata(self):
        return {"scenario": self.scenario, "methods": self.methods, "base_seed": self.base_seed,
                "config_hash": self.config_hash, "faults": self.faults}

    def rows(self):
        """Summary rows: method, sigma2, n_train, then mean/sd per metric."""
        out = []
        for name, stats in self.summary.items():
            row = {"method": name, "sigma2": self.scenario["sigma2"],
                   "n_train": self.scenario["n_train"], "n_ok": stats["n_ok"]}
            for k in self.METRICS:
                row[f"{k}_mean"] = stats[f"{k}_mean"]
                row[f"{k}_sd"] = stats[f"{k}_sd"]
            out.append(row)
        return out

    def table(self):
        """Human-readable table in the 'Methods / sigma2 / MSE (sd) / FPR (sd) / FNR (sd)' layout."""
        head = f"{'Methods':<12}{'sigma2':>8}{'n':>6}  {'MSE (sd)':<20}{'FPR (sd)':<20}{'FNR (sd)':<20}"
        lines = [head, "-" * len(head)]
        for r in self.rows():
            cells = [f"{r[f'{k}_mean']:.4f} ({r[f'{k}_sd']:.4f})" for k in self.METRICS]
            lines.append(f"{r['method']:<12}{r['sigma2']:>8g}{r['n_train']:>6d}  "
                         + "".join(f"{c:<20}" for c in cells))
        return "\n".join(lines)


def run_replications(s, methods, base_seed, threads=1, reps=None):
    """Fit every method on every replication and aggregate the metrics.

    Replications run on up to ``threads`` worker processes; each owns
    streams derived from (base_seed, rep) so results do not depend on
    scheduling.
    """
    methods = [method(m) if isinstance(m, str) else m for m in methods]
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError(f"method names must be unique, got {names}")
    reps = s.replications if reps is None else int(reps)
    if reps < 1:
        raise ValueError("need at least one replication")
    jobs = [(s, methods, base_seed, r) for r in range(reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    records = sorted((row for rows in results for row in rows),
                     key=lambda r: (r["rep"], names.index(r["method"])))
    summary, faults = {}, {}
    for name in names:
        ok = [r for r in records if r["method"] == name and not r["fault"]]
        faults[name] = sum(1 for r in records if r["method"] == name and r["fault"])
        stats = {"n_ok": len(ok)}
        for k in RunReport.METRICS:
            stats[f"{k}_mean"], stats[f"{k}_sd"] = _mean_sd([r[k] for r in ok])
        summary[name] = stats
    return RunReport(scenario=s.to_dict(), methods=[m.to_dict() for m in methods],
                     base_seed=int(base_seed), summary=summary, records=records, faults=faults)
