"""
latentprobit - sparse latent probit model for multitask and transfer
classification across heterogeneous feature spaces.

Each task's features are a sparse linear image of a shared latent space in
which a single probit classifier operates. Parameters are fitted by EM with
Laplacian priors; labeled and unlabeled examples both contribute.
"""

__version__ = '1.0.1'
__license__ = 'MIT'

from .model import Hyperparams, LpmParams, TaskDataset, load_params, save_params, validate
from .sampler import GenConfig, generate, sample_task
from .em import FitOptions, FitTrace, e_step_task, fit, log_posterior, truncated_normal_moments
from .predict import Prediction, auc, fit_stl, predict
from .exceptions import (
    LPMException,
    ValidationError,
    ConfigError,
    ParseError,
    UnsupportedVersionError,
    DataError,
    NumericalError,
    DivergenceError,
)

__all__ = [
    'Hyperparams',
    'LpmParams',
    'TaskDataset',
    'load_params',
    'save_params',
    'validate',
    'GenConfig',
    'generate',
    'sample_task',
    'FitOptions',
    'FitTrace',
    'e_step_task',
    'fit',
    'log_posterior',
    'truncated_normal_moments',
    'Prediction',
    'auc',
    'fit_stl',
    'predict',
    'LPMException',
    'ValidationError',
    'ConfigError',
    'ParseError',
    'UnsupportedVersionError',
    'DataError',
    'NumericalError',
    'DivergenceError',
]
