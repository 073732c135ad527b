import numpy as np
import pytest

from src.models.dataset import simulate
from src.models.hyperparams import HyperParams, PriorSpec
from src.models.linear_gaussian_ssm import LinearGaussianSsm
from src.models.poisson_ssm import PoissonSsm


@pytest.fixture
def theta():
    return HyperParams(0.7, 0.5, 1.0)


@pytest.fixture
def prior():
    return PriorSpec()


@pytest.fixture
def poisson_model():
    return PoissonSsm()


@pytest.fixture
def gaussian_model():
    return LinearGaussianSsm(obs_noise=1.0)


@pytest.fixture
def poisson_data(poisson_model, theta):
    return simulate(poisson_model, 30, theta, seed=11)


@pytest.fixture
def gaussian_data(gaussian_model, theta):
    return simulate(gaussian_model, 25, theta, seed=12)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
