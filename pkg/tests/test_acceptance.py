import numpy as np
import pytest
from scipy import integrate

from src.experiments.acceptance import (
    DEFAULT_THETA,
    _brute_force_marginal,
    check_chain_rule,
    check_gaussian_exactness,
    check_pmmh_correctness,
    check_resampling,
    check_small_t_quadrature,
    check_unbiasedness,
)
from src.inla.marginals import latent_marginal_gaussian, latent_marginal_laplace
from src.inla.theta_grid import ThetaGrid, grid_chains
from src.models.poisson_ssm import PoissonSsm


class TestFastCriteria:
    def test_gaussian_exactness(self):
        result = check_gaussian_exactness()
        assert result.number == 1
        assert result.passed, result.detail

    def test_chain_rule(self):
        result = check_chain_rule()
        assert result.passed, result.detail

    def test_resampling_suite(self):
        result = check_resampling(repetitions=2000)
        assert result.passed, result.detail


@pytest.mark.slow
class TestMonteCarloCriteria:
    def test_unbiasedness(self):
        result = check_unbiasedness(R=300, max_workers=2)
        assert result.passed, result.detail

    def test_exact_mh_matches_quadrature(self):
        result = check_pmmh_correctness(iterations=30000, n_points=21)
        assert result.number == 7
        assert result.passed, result.detail


@pytest.mark.slow
class TestSmallTQuadrature:
    def test_laplace_not_worse_than_gaussian(self):
        model = PoissonSsm()
        y = np.array([1.0, 3.0, 2.0])
        grid = ThetaGrid.single_point(DEFAULT_THETA)
        chains = grid_chains(model, y, grid)
        gaussian = latent_marginal_gaussian(grid, chains, 1)
        laplace = latent_marginal_laplace(model, y, grid, 1, chains)
        exact = _brute_force_marginal(model, y, DEFAULT_THETA, chains[0], 1, gaussian.grid, n_points=101)
        assert integrate.trapezoid(exact, gaussian.grid) == pytest.approx(1.0)
        gaussian_error = np.max(np.abs(gaussian.density() - exact))
        laplace_error = np.max(np.abs(laplace.pdf(gaussian.grid) - exact))
        assert laplace_error <= gaussian_error
        assert gaussian_error < 0.1

    def test_small_t_criterion_passes_on_theta_grid(self):
        result = check_small_t_quadrature()
        assert result.number == 9
        assert result.passed, result.detail
        assert "theta 积分点" in result.detail
