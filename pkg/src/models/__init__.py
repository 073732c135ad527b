from src.models.hyperparams import HyperParams, PriorSpec, log_prior, PARAM_NAMES
from src.models.base_model import SsmModel, Ar1LatentModel, ar1_prior_precision
from src.models.poisson_ssm import PoissonSsm, poisson_log_obs
from src.models.linear_gaussian_ssm import LinearGaussianSsm, kalman_filter, kalman_loglik
from src.models.dataset import Dataset, simulate
from src.models.models_manager import create_model, model_from_dataset

__all__ = ['HyperParams', 'PriorSpec', 'log_prior', 'PARAM_NAMES', 'SsmModel', 'Ar1LatentModel',
           'ar1_prior_precision', 'PoissonSsm', 'poisson_log_obs', 'LinearGaussianSsm', 'kalman_filter',
           'kalman_loglik', 'Dataset', 'simulate', 'create_model', 'model_from_dataset']
