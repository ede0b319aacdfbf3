"""Normal compound-gamma shrinkage prior for Bayesian linear regression."""

from .estimator import NCGRegressor
from .exceptions import (DomainError, EMFault, InferenceFault, ParseError, SamplerFault,
                         ValidationError)
from .gibbs import GibbsConfig, McemConfig, run_gibbs, summarize
from .model import Dataset, GibbsState, Hyperparameters, PosteriorDraws, validate_hyperparameters
from .vb import VariationalState, run_cavi, run_mfvb_em

__version__ = "0.1.0"

__all__ = [
    "NCGRegressor", "Dataset", "GibbsState", "Hyperparameters", "PosteriorDraws",
    "validate_hyperparameters", "GibbsConfig", "McemConfig", "run_gibbs", "summarize",
    "VariationalState", "run_cavi", "run_mfvb_em",
    "DomainError", "EMFault", "InferenceFault", "ParseError", "SamplerFault", "ValidationError",
]
