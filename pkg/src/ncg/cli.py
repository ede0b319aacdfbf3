"""Command-line entry point: ``ncg <subcommand> [flags]``.

Flags may also come from ``--config file.json`` whose keys mirror the flag
names (dashes as underscores); explicit flags win over the file.
"""

import argparse
import logging
from pathlib import Path
import sys

import numpy as np
from scipy.stats import norm

from . import evaluation as ev
from . import io
from .exceptions import EMFault, InferenceFault, ParseError, SamplerFault, ValidationError
from .gibbs import GibbsConfig, run_gibbs, summarize
from .model import Hyperparameters
from .prior import (ConsistencyCheckInput, check_density_floor, check_tail_condition,
                    density_curve)
from .vb import run_cavi, run_mfvb_em

log = logging.getLogger("ncg")

DEFAULTS = {
    "common": {"seed": 0, "out_dir": ".", "threads": 1, "log_level": "WARNING"},
    "fit": {"response": "y", "engine": "gibbs", "preset": "ncg10", "phi": 1.0, "c0": 0.01,
            "d0": 0.01, "iters": 15000, "burn_in": 2000, "thin": 1, "tol": 1e-8,
            "max_iters": 500, "em": "off", "standardize": True, "level": 0.95},
    "simulate": {"preset": "sim1", "sigma2": "1", "n_test": 200, "reps": 100,
                 "methods": "ncg2,ncg10,horseshoe", "selection": "ci", "iters": 15000,
                 "burn_in": 2000},
    "prior-plot": {"preset": "ncg2", "phi": 1.0, "grid_min": -5.0, "grid_max": 5.0,
                   "grid_n": 201, "n_mc": 100_000},
    "prior-check": {"preset": "ncg2", "phi": 1.0, "n": 100, "p": 1000, "s": 5, "u": 0.5,
                    "n_mc": 1_000_000, "e_n": 1.0, "level": 0.99},
    "prostate": {"reps": 20, "methods": "ncg2,ncg10,horseshoe", "standardize": True,
                 "selection": "ci", "iters": 15000, "burn_in": 2000},
}


def _floats(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _add_prior_flags(p, with_phi=True):
    p.add_argument("--preset", help="hyperparameter preset (ncg2, ncg10, horseshoe)")
    p.add_argument("--c", help="comma-separated level shapes c_1..c_N (overrides --preset)")
    p.add_argument("--c1", type=float, help="override the first-level shape only")
    if with_phi:
        p.add_argument("--phi", type=float, help="terminal rate")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--config", help="JSON file with default flag values")
    g.add_argument("--seed", type=int)
    g.add_argument("--out-dir")
    g.add_argument("--threads", type=int, help="worker processes for replications")
    g.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    parser = argparse.ArgumentParser(prog="ncg", description="Normal compound-gamma shrinkage regression")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", parents=[common], help="fit one dataset")
    p.add_argument("--data", help="CSV file with a header row")
    p.add_argument("--response", help="response column name")
    p.add_argument("--covariates", help="comma-separated covariate columns (default: all others)")
    p.add_argument("--engine", choices=["gibbs", "vb"])
    _add_prior_flags(p)
    p.add_argument("--c0", type=float)
    p.add_argument("--d0", type=float)
    p.add_argument("--iters", type=int, help="total Gibbs iterations")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--tol", type=float, help="relative ELBO tolerance")
    p.add_argument("--max-iters", type=int, help="maximum CAVI sweeps")
    p.add_argument("--em", choices=["off", "mcem", "mfvb"])
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction)
    p.add_argument("--level", type=float, help="credible level")

    p = sub.add_parser("simulate", parents=[common], help="replicated simulation study")
    p.add_argument("--preset", choices=sorted(ev.SCENARIOS))
    p.add_argument("--case", choices=sorted(ev.CASES))
    p.add_argument("--sigma2", help="noise variance, or a comma-separated list")
    p.add_argument("--n", type=int, help="training size")
    p.add_argument("--n-test", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--methods", help="comma list, e.g. ncg2,ncg10,vb:ncg10")
    p.add_argument("--selection", choices=["ci", "median"])
    p.add_argument("--iters", type=int)
    p.add_argument("--burn-in", type=int)

    p = sub.add_parser("prior-plot", parents=[common], help="marginal prior density curve")
    _add_prior_flags(p)
    p.add_argument("--grid", help="comma-separated evaluation points")
    p.add_argument("--grid-min", type=float)
    p.add_argument("--grid-max", type=float)
    p.add_argument("--grid-n", type=int)
    p.add_argument("--n-mc", type=int)

    p = sub.add_parser("prior-check", parents=[common], help="tail-mass and density-floor checks")
    _add_prior_flags(p)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=int)
    p.add_argument("--s", type=int)
    p.add_argument("--u", type=float)
    p.add_argument("--n-mc", type=int)
    p.add_argument("--e-n", type=float, help="half-width of the density-floor interval")
    p.add_argument("--level", type=float)

    p = sub.add_parser("prostate", parents=[common], help="prostate data with noise covariates")
    p.add_argument("--data", help="prostate CSV (lcavol..pgg45, lpsa)")
    p.add_argument("--reps", type=int, help="repeated random splits")
    p.add_argument("--methods")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction)
    p.add_argument("--selection", choices=["ci", "median"])
    p.add_argument("--iters", type=int)
    p.add_argument("--burn-in", type=int)
    return parser


def resolve(args):
    """Merge defaults, the optional JSON config and explicit flags."""
    explicit = {k: v for k, v in vars(args).items() if v is not None}
    cfg = io.load_config(args.config) if args.config else {}
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    unknown = sorted(set(cfg) - set(vars(args)))
    if unknown:
        raise ValidationError([f"unknown config keys for {args.command}: {unknown}"])
    merged = {**DEFAULTS["common"], **DEFAULTS[args.command], **cfg, **explicit}
    merged.pop("config", None)
    return merged


def _hyper(o):
    if o.get("c") is not None:
        c = o["c"] if isinstance(o["c"], list) else _floats(o["c"])
        h = Hyperparameters(c=tuple(c), phi=o.get("phi", 1.0), c0=o.get("c0", 0.01), d0=o.get("d0", 0.01))
    else:
        h = Hyperparameters.preset(o["preset"], phi=o.get("phi", 1.0),
                                   c0=o.get("c0", 0.01), d0=o.get("d0", 0.01))
    if o.get("c1") is not None:
        h = h.with_c((o["c1"],) + h.c[1:])
    return h


def _methods(o):
    cfg = GibbsConfig(o["iters"], o["burn_in"])
    out = []
    for spec in str(o["methods"]).split(","):
        spec = spec.strip()
        out.append(ev.method(spec, gibbs=cfg, selection=o.get("selection", "ci")))
    return out


def cmd_fit(o):
    if not o.get("data"):
        raise ValidationError(["fit needs --data"])
    covs = o.get("covariates")
    if isinstance(covs, str):
        covs = [c.strip() for c in covs.split(",")]
    data = io.load_csv(o["data"], o["response"], covs)
    if o["standardize"]:
        data, _, _ = io.standardize(data, data)
    rc = io.RunConfig(engine=o["engine"], preset=o["preset"],
                      c=list(_hyper(o).c), phi=o["phi"], c0=o["c0"], d0=o["d0"],
                      total_iters=o["iters"], burn_in=o["burn_in"], thin=o["thin"], tol=o["tol"],
                      max_iters=o["max_iters"], em=o["em"], seed=o["seed"],
                      standardize=o["standardize"], out_dir=o["out_dir"], threads=o["threads"],
                      extra={"data": str(o["data"]), "response": o["response"], "level": o["level"]})
    config = rc.to_dict()
    out = Path(o["out_dir"])
    h = rc.hyperparameters()
    header = ["coefficient", "mean", "sd", "lower", "upper", "median"]
    if rc.engine == "gibbs":
        draws = run_gibbs(data, h, rc.gibbs_config(), np.random.default_rng(rc.seed))
        s = summarize(draws, o["level"])
        rows = zip(data.names, s.mean, s.sd, s.lower, s.upper, s.median)
        io.write_csv(out / "summary.csv", header, rows, config)
        io.write_csv(out / "draws.csv", list(data.names) + ["sigma2"],
                     np.column_stack([draws.beta_draws, draws.sigma2_draws]), config)
        io.write_json(out / "state.json", {
            "final_state": draws.final_state.to_dict(), "c": list(draws.hyperparameters.c),
            "em_trajectory": draws.em_trajectory, "clamp_events": draws.clamp_events,
            "n_kept": draws.n_kept}, config)
    else:
        if rc.em == "mfvb":
            state, h_fit, traj = run_mfvb_em(data, h, rc.tol, rc.max_iters)
        else:
            state, h_fit, traj = run_cavi(data, h, rc.tol, rc.max_iters), None, None
        sd = np.sqrt(np.diag(state.V))
        zq = norm.ppf(0.5 + 0.5 * o["level"])
        rows = zip(data.names, state.mu, sd, state.mu - zq * sd, state.mu + zq * sd, state.mu)
        io.write_csv(out / "summary.csv", header, rows, config)
        io.write_csv(out / "elbo_trace.csv", ["sweep", "elbo", "max_abs_change"], state.trace, config)
        payload = state.to_dict(h_fit)
        if traj is not None:
            payload["em_trajectory"] = traj
        io.write_json(out / "state.json", payload, config)
    return 0


def cmd_simulate(o):
    sigmas = o["sigma2"] if isinstance(o["sigma2"], list) else _floats(o["sigma2"])
    methods = _methods(o)
    out = Path(o["out_dir"])
    reports = []
    for s2 in sigmas:
        kw = {"sigma2": float(s2), "n_test": o["n_test"], "replications": o["reps"]}
        if o.get("n") is not None:
            kw["n_train"] = o["n"]
        scen = ev.scenario_preset(o["preset"], o.get("case"), **kw)
        reports.append(ev.run_replications(scen, methods, o["seed"], threads=o["threads"]))
    config = {"command": "simulate", **{k: v for k, v in o.items()}}
    header = ["method", "sigma2", "n_train", "n_ok", "mse_mean", "mse_sd", "fp_mean", "fp_sd",
              "fn_mean", "fn_sd"]

    def summary_rows(reps):
        return [[r[k] for k in header] for rep in reps for r in rep.rows()]

    rec_header = ["rep", "method", "sigma2", "dataset_hash", "mse", "fp", "fn", "fault"]

    def record_rows(reps):
        return [[r["rep"], r["method"], rep.scenario["sigma2"], r["dataset_hash"], r["mse"],
                 r["fp"], r["fn"], r["fault"]] for rep in reps for r in rep.records]

    io.write_csv(out / "run_report.csv", header, summary_rows(reports), config)
    io.write_csv(out / "run_records.csv", rec_header, record_rows(reports), config)
    io.write_json(out / "run_report.json",
                  {"reports": [{**rep.metadata(), "summary": rep.summary} for rep in reports]}, config)
    io.write_text(out / "run_report.txt", "\n\n".join(rep.table() for rep in reports), config)
    if len(reports) > 1:
        for rep in reports:
            tag = io.fmt(rep.scenario["sigma2"])
            io.write_csv(out / f"run_report_sigma2-{tag}.csv", header, summary_rows([rep]), config)
    print("\n\n".join(rep.table() for rep in reports))
    return 0


def cmd_prior_plot(o):
    h = _hyper(o)
    if o.get("grid"):
        grid = o["grid"] if isinstance(o["grid"], list) else _floats(o["grid"])
    else:
        grid = np.linspace(o["grid_min"], o["grid_max"], o["grid_n"])
    curve = density_curve(grid, h, o["n_mc"], np.random.default_rng(o["seed"]))
    config = {"command": "prior-plot", "hyperparameters": h.to_dict(),
              **{k: v for k, v in o.items() if k not in ("c",)}}
    io.write_csv(Path(o["out_dir"]) / "density_curve.csv", ["x", "log_density", "stderr"],
                 curve.tolist(), config)
    return 0


def cmd_prior_check(o):
    h = _hyper(o)
    inp = ConsistencyCheckInput(o["n"], o["p"], o["s"], o["u"])
    rng = np.random.default_rng(o["seed"])
    tail = check_tail_condition(h, inp, o["n_mc"], rng, o["level"])
    floor = check_density_floor(h, o["e_n"], o["p"], o["n_mc"], rng)
    config = {"command": "prior-check", "hyperparameters": h.to_dict(),
              **{k: v for k, v in o.items() if k not in ("c",)}}
    out = Path(o["out_dir"])
    io.write_json(out / "tail_check.json", tail.to_dict(), config)
    io.write_json(out / "density_floor.json", floor.to_dict(), config)
    print(f"tail mass {tail.tail_mass_estimate:.3e} (99% upper {tail.interval[1]:.3e}) "
          f"vs bound {tail.bound:.3e}: satisfied={tail.satisfied}")
    return 0


def _prostate_rep(args):
    path, seed, rep, do_std, methods = args
    train, test, _ = io.prostate_pipeline(path, seed, do_std, rep=rep)
    noise = np.arange(len(io.PROSTATE_COLUMNS), train.p)
    rows = []
    for m in methods:
        row = {"rep": rep, "method": m.name}
        try:
            res = ev.fit_method(m, train, np.random.default_rng(ev.fit_seed(seed, rep, m.seed)))
            resid = test.y - test.X @ res.beta_hat
            sel = res.selected(m)
            row.update(mse=float(resid @ resid / test.n), fp=int(sel[noise].sum()),
                       n_selected=int(sel.sum()), fault="")
        except (SamplerFault, InferenceFault, EMFault) as exc:
            row.update(mse=float("nan"), fp=-1, n_selected=-1, fault=str(exc))
        rows.append(row)
    return rows


def cmd_prostate(o):
    if not o.get("data"):
        raise ValidationError(["prostate needs --data"])
    methods = _methods(o)
    jobs = [(o["data"], o["seed"], r, o["standardize"], methods) for r in range(o["reps"])]
    io.prostate_pipeline(o["data"], o["seed"], o["standardize"], rep=0)  # schema check up front
    if o["threads"] > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(o["threads"]) as pool:
            results = list(pool.map(_prostate_rep, jobs))
    else:
        results = [_prostate_rep(j) for j in jobs]
    records = [r for rows in results for r in rows]
    summary = []
    for m in methods:
        ok = [r for r in records if r["method"] == m.name and not r["fault"]]
        mse = ev._mean_sd([r["mse"] for r in ok])
        fp = ev._mean_sd([r["fp"] for r in ok])
        summary.append([m.name, len(ok), *mse, *fp])
    config = {"command": "prostate", **o}
    out = Path(o["out_dir"])
    header = ["method", "n_ok", "mse_mean", "mse_sd", "fp_mean", "fp_sd"]
    io.write_csv(out / "prostate_report.csv", header, summary, config)
    io.write_json(out / "prostate_report.json", {"summary": [dict(zip(header, r)) for r in summary],
                                                 "records": records}, config)
    lines = [f"{'Methods':<12}{'MSE (sd)':<22}{'FPR (sd)':<22}"]
    lines += [f"{r[0]:<12}{f'{r[2]:.4f} ({r[3]:.4f})':<22}{f'{r[4]:.4f} ({r[5]:.4f})':<22}" for r in summary]
    io.write_text(out / "prostate_report.txt", "\n".join(lines), config)
    print("\n".join(lines))
    return 0


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "prior-plot": cmd_prior_plot,
            "prior-check": cmd_prior_check, "prostate": cmd_prostate}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        o = resolve(args)
        logging.basicConfig(level=o["log_level"], format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](o)
    except (ValidationError, ParseError, ValueError) as exc:
        print(f"ncg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (SamplerFault, InferenceFault, EMFault) as exc:
        print(f"ncg {args.command}: engine fault: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"ncg {args.command}: could not write output: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
