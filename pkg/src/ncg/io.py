"""Configuration, CSV/JSON emission and dataset ingestion.

Every emitted file carries the resolved configuration and seed: CSV files as
leading ``#`` comment lines, JSON files under a ``"config"`` key. Floats are
written with 17 significant digits so they parse back exactly.
"""

import csv
from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ParseError, ValidationError
from .gibbs import GibbsConfig, McemConfig
from .model import Dataset, Hyperparameters, PRESETS

PROSTATE_COLUMNS = ("lcavol", "lweight", "age", "lbph", "svi", "lcp", "gleason", "pgg45")
PROSTATE_RESPONSE = "lpsa"
PROSTATE_ROWS = 97
PROSTATE_TRAIN = 67
PROSTATE_NOISE = 12


def fmt(v):
    """17-significant-digit text for floats; ints and strings unchanged."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload, config=None):
    body = dict(payload)
    if config is not None:
        body = {"config": config, **body}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_csv(path, header, rows, config=None):
    """Write ``rows`` (sequences aligned with ``header``) after config comment lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(_jsonable(config), sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_text(path, text, config=None):
    """Plain-text report preceded by a config comment line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = "# config: " + json.dumps(_jsonable(config), sort_keys=True) + "\n" if config is not None else ""
    path.write_text(head + text.rstrip("\n") + "\n", encoding="utf-8")
    return path


def read_csv_table(path, delimiter=","):
    """(header, rows) of a CSV, skipping ``#`` comment lines. Rows keep line numbers."""
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        numbered = [(i, line) for i, line in enumerate(fh, start=1)
                    if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        raise ParseError(f"{path}: no header row")
    parsed = list(csv.reader([line for _, line in numbered], delimiter=delimiter))
    header = [h.strip() for h in parsed[0]]
    rows = [(numbered[i][0], r) for i, r in enumerate(parsed[1:], start=1)]
    return header, rows


def load_csv(path, response_column, covariates=None, delimiter=","):
    """Read a numeric CSV into a Dataset.

    The response is taken by name; the covariates are ``covariates`` (in that
    order) or every other column in file order. Errors name the file line
    and column of the offending cell.
    """
    header, rows = read_csv_table(path, delimiter)
    if response_column not in header:
        raise ParseError(f"{path}: response column {response_column!r} not found; "
                         f"available columns: {header}")
    names = list(covariates) if covariates is not None else [h for h in header if h != response_column]
    missing = [c for c in names if c not in header]
    if missing:
        raise ParseError(f"{path}: columns {missing} not found; available columns: {header}")
    idx = [header.index(c) for c in names]
    iy = header.index(response_column)
    X = np.empty((len(rows), len(idx)))
    y = np.empty(len(rows))
    for r, (line_no, cells) in enumerate(rows):
        if len(cells) != len(header):
            raise ParseError(f"{path}: line {line_no} has {len(cells)} cells, expected {len(header)}")
        for out_col, col in [(None, iy)] + list(enumerate(idx)):
            try:
                v = float(cells[col])
            except ValueError:
                raise ParseError(f"{path}: line {line_no}, column {header[col]!r}: "
                                 f"non-numeric value {cells[col]!r}") from None
            if out_col is None:
                y[r] = v
            else:
                X[r, out_col] = v
    if len(rows) == 0:
        raise ParseError(f"{path}: no data rows")
    try:
        return Dataset(X, y, names=names)
    except ValidationError as exc:
        raise ParseError(f"{path}: {exc}") from None


def standardize(train, test):
    """Center y and scale X columns to unit variance using train statistics only."""
    mx = train.X.mean(axis=0)
    sx = train.X.std(axis=0, ddof=1)
    sx[sx == 0] = 1.0
    my = train.y.mean()

    def apply(d):
        return Dataset((d.X - mx) / sx, d.y - my, names=d.names)

    return apply(train), apply(test), {"x_mean": mx, "x_scale": sx, "y_mean": my}


def prostate_pipeline(path, seed, do_standardize=True, rep=None):
    """Prostate data with 12 N(0,1) noise columns and a seeded 67/30 split.

    ``rep`` selects an independent replicate stream (seed, rep) for repeated
    splits; ``None`` uses ``seed`` alone.
    """
    data = load_csv(path, PROSTATE_RESPONSE, PROSTATE_COLUMNS)
    if data.n != PROSTATE_ROWS:
        raise ParseError(f"{path}: expected {PROSTATE_ROWS} rows, found {data.n}")
    ss = np.random.SeedSequence([int(seed)] if rep is None else [int(seed), int(rep)])
    rng = np.random.default_rng(ss)
    noise = rng.standard_normal((data.n, PROSTATE_NOISE))
    X = np.hstack([data.X, noise])
    names = list(PROSTATE_COLUMNS) + [f"x{j}" for j in range(9, 9 + PROSTATE_NOISE)]
    perm = rng.permutation(data.n)
    tr, te = np.sort(perm[:PROSTATE_TRAIN]), np.sort(perm[PROSTATE_TRAIN:])
    train = Dataset(X[tr], data.y[tr], names=names)
    test = Dataset(X[te], data.y[te], names=names)
    info = {"train_index": tr, "test_index": te, "standardize": bool(do_standardize)}
    if do_standardize:
        train, test, stats = standardize(train, test)
        info.update(stats)
    return train, test, info


@dataclass
class RunConfig:
    """Resolved settings for one fit; JSON config files mirror these fields."""

    engine: str = "gibbs"
    preset: str = "ncg10"
    c: list = None
    phi: float = 1.0
    c0: float = 0.01
    d0: float = 0.01
    total_iters: int = 15000
    burn_in: int = 2000
    thin: int = 1
    tol: float = 1e-8
    max_iters: int = 500
    em: str = "off"
    em_window: int = 500
    em_rounds: int = 20
    seed: int = 0
    standardize: bool = True
    out_dir: str = "."
    threads: int = 1
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        failures = []
        if self.engine not in ("gibbs", "vb"):
            failures.append(f"engine must be gibbs or vb, got {self.engine!r}")
        if self.em not in ("off", "mcem", "mfvb"):
            failures.append(f"em must be off, mcem or mfvb, got {self.em!r}")
        elif (self.em, self.engine) in (("mcem", "vb"), ("mfvb", "gibbs")):
            failures.append(f"em={self.em} does not apply to engine={self.engine}")
        if self.c is None and self.preset not in PRESETS:
            failures.append(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if failures:
            raise ValidationError(failures)

    def hyperparameters(self):
        if self.c is not None:
            return Hyperparameters(c=tuple(self.c), phi=self.phi, c0=self.c0, d0=self.d0)
        return Hyperparameters.preset(self.preset, phi=self.phi, c0=self.c0, d0=self.d0)

    def gibbs_config(self):
        mcem = McemConfig(self.em_window, self.em_rounds) if self.em == "mcem" else None
        return GibbsConfig(self.total_iters, self.burn_in, self.thin, mcem, self.seed)

    def to_dict(self):
        d = asdict(self)
        d["hyperparameters"] = self.hyperparameters().to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError([f"unknown config keys {unknown}"])
        return cls(**d)


def load_config(path):
    """Parse a JSON config file into a plain dict."""
    path = Path(path)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ParseError(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from None
    if not isinstance(d, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    return d
