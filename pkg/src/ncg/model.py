"""Shared data model: hyperparameters, datasets, sampler states, draw storage."""

from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np

from .exceptions import ValidationError

DEFAULT_C = 0.5
DEFAULT_PHI = 1.0
DEFAULT_C0 = 0.01
DEFAULT_D0 = 0.01


class FiniteMomentWarning(UserWarning):
    """Prior second moment of beta is infinite (some even-level shape <= 1)."""


@dataclass(frozen=True)
class Hyperparameters:
    """Compound-gamma prior settings.

    ``c`` holds the level shapes c_1..c_N, ``phi`` the terminal rate, and
    ``c0``/``d0`` the inverse-gamma prior on the noise variance.
    """

    c: tuple
    phi: float = DEFAULT_PHI
    c0: float = DEFAULT_C0
    d0: float = DEFAULT_D0

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(float(v) for v in np.atleast_1d(self.c)))

    @property
    def depth(self):
        return len(self.c)

    @classmethod
    def preset(cls, name, **overrides):
        try:
            depth = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
        return cls(c=(DEFAULT_C,) * depth, **overrides)

    def with_c(self, c):
        return replace(self, c=tuple(c))

    def to_dict(self):
        return {"N": self.depth, "c": list(self.c), "phi": self.phi, "c0": self.c0, "d0": self.d0}

    @classmethod
    def from_dict(cls, d):
        h = cls(c=tuple(d["c"]), phi=d.get("phi", DEFAULT_PHI),
                c0=d.get("c0", DEFAULT_C0), d0=d.get("d0", DEFAULT_D0))
        if "N" in d and d["N"] != h.depth:
            raise ValidationError([f"N={d['N']} does not match len(c)={h.depth}"])
        return h


# preset name -> depth; all presets use c_k = 1/2 and phi = 1
PRESETS = {"ncg2": 2, "ncg10": 10, "horseshoe": 4}


def validate_hyperparameters(h, warn=True):
    """Check every invariant of ``h``.

    Raises ValidationError listing each failed field. Returns a list of
    warning strings (also emitted as FiniteMomentWarning) when an even-level
    shape is <= 1, since the prior variance of beta is then infinite.
    """
    failures = []
    if h.depth < 1:
        failures.append("N must be >= 1")
    for k, ck in enumerate(h.c, start=1):
        if not (math.isfinite(ck) and ck > 0):
            failures.append(f"c_{k} must be positive, got {ck}")
    for name in ("phi", "c0", "d0"):
        v = getattr(h, name)
        if not (math.isfinite(v) and v > 0):
            failures.append(f"{name} must be positive, got {v}")
    if failures:
        raise ValidationError(failures)
    notes = [
        f"c_{k} = {ck} <= 1 at an even level: prior E(beta^2) is infinite"
        for k, ck in enumerate(h.c, start=1)
        if k % 2 == 0 and ck <= 1
    ]
    if warn:
        for msg in notes:
            warnings.warn(msg, FiniteMomentWarning, stacklevel=2)
    return notes


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    beta0: np.ndarray = None
    sigma0sq: float = None
    names: list = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X.ndim != 2:
            raise ValidationError([f"X must be 2-D, got shape {self.X.shape}"])
        failures = []
        if not np.all(np.isfinite(self.X)):
            failures.append("X has non-finite entries")
        if not np.all(np.isfinite(self.y)):
            failures.append("y has non-finite entries")
        if self.y.shape[0] != self.X.shape[0]:
            failures.append(f"len(y)={self.y.shape[0]} != rows(X)={self.X.shape[0]}")
        if self.beta0 is not None:
            self.beta0 = np.asarray(self.beta0, dtype=float)
            if self.beta0.shape != (self.X.shape[1],):
                failures.append("beta0 length must equal columns of X")
        if failures:
            raise ValidationError(failures)
        if self.names is None:
            self.names = [f"x{j + 1}" for j in range(self.X.shape[1])]

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def has_truth(self):
        return self.beta0 is not None


@dataclass
class GibbsState:
    """One MCMC iterate. ``z[k, j]`` is the level-(k+1) scale of coefficient j."""

    beta: np.ndarray
    z: np.ndarray
    sigma2: float

    @classmethod
    def initial(cls, data, depth):
        # beta = 0, z = 1, sigma2 = sample variance of y
        s2 = float(np.var(data.y, ddof=1)) if data.n > 1 else 1.0
        if not s2 > 0:
            s2 = 1.0
        return cls(beta=np.zeros(data.p), z=np.ones((depth, data.p)), sigma2=s2)

    def copy(self):
        return GibbsState(self.beta.copy(), self.z.copy(), float(self.sigma2))

    def to_dict(self):
        return {"beta": self.beta.tolist(), "z": self.z.tolist(), "sigma2": float(self.sigma2)}

    @classmethod
    def from_dict(cls, d):
        return cls(beta=np.asarray(d["beta"], dtype=float),
                   z=np.asarray(d["z"], dtype=float).reshape(len(d["z"]), -1),
                   sigma2=float(d["sigma2"]))


def local_scale(state, j):
    """lambda_j = prod_k z_kj; the prior variance of beta_j is sigma2 * lambda_j."""
    return float(np.prod(state.z[:, j]))


@dataclass
class PosteriorDraws:
    beta_draws: np.ndarray
    sigma2_draws: np.ndarray
    z_log_means: np.ndarray = None
    clamp_events: int = 0
    hyperparameters: Hyperparameters = None
    em_trajectory: list = field(default_factory=list)
    final_state: GibbsState = None

    @property
    def n_kept(self):
        return self.beta_draws.shape[0]
