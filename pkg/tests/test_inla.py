import dataclasses
import math

import numpy as np
import pytest
from scipy import special, stats

from src.inla.gaussian_approx import NewtonConfig, conditional_mode, gaussian_approx, newton_mode
from src.inla.marginals import (
    Marginal1D,
    hyper_marginal,
    hyper_marginals,
    latent_marginal_gaussian,
    latent_marginal_laplace,
)
from src.inla.theta_grid import (
    InlaConfig,
    ThetaGrid,
    explore_log_density,
    fit_inla,
    grid_chains,
    log_theta_posterior,
)
from src.linalg.tridiag import dense_oracle
from src.models.base_model import Ar1LatentModel, ar1_prior_precision
from src.models.hyperparams import HyperParams, log_prior
from src.models.linear_gaussian_ssm import kalman_loglik
from src.models.poisson_ssm import PoissonSsm
from src.utils.errors import ConfigError, HessianNotPD, IndexOutOfRange, OptimFailed

GAUSS_MEAN = np.array([0.5, 1.0, -0.3])
GAUSS_PREC = np.diag([4.0, 1.0, 2.25])


def gaussian_log_density(u):
    diff = np.asarray(u) - GAUSS_MEAN
    return -0.5 * diff @ GAUSS_PREC @ diff


def dense_poisson_mode(y, theta, n_iter=50):
    """稠密海森矩阵上的阻尼牛顿迭代，作为三对角实现的对照"""
    Q = ar1_prior_precision(y.shape[0], theta).to_dense()

    def objective(x):
        return -0.5 * x @ Q @ x + float(np.sum(y * (x + theta.alpha) - np.exp(x + theta.alpha)))

    x = np.zeros(y.shape[0])
    for _ in range(n_iter):
        rate = np.exp(x + theta.alpha)
        step = np.linalg.solve(Q + np.diag(rate), -Q @ x + y - rate)
        size = 1.0
        while objective(x + size * step) < objective(x) and size > 1e-8:
            size /= 2.0
        x = x + size * step
    return x


class ShiftedPoissonSsm(PoissonSsm):
    """每个观测对数密度加上同一个常数"""

    def __init__(self, shift):
        self.shift = shift

    def log_observation(self, y, x, theta):
        return super().log_observation(y, x, theta) + self.shift


class LogisticNoiseSsm(Ar1LatentModel):
    """观测对数密度 -log cosh(y - x - alpha)，关于 x = y - alpha 对称"""

    name = "logistic_noise"

    def log_observation(self, y, x, theta):
        return -np.logaddexp(y - x - theta.alpha, x + theta.alpha - y) + math.log(2.0)

    def sample_observation(self, x, theta, rng):
        return np.asarray(x, dtype=float) + theta.alpha + rng.logistic(size=np.shape(x))

    def observation_derivatives(self, y, x, theta):
        r = np.tanh(np.asarray(y, dtype=float) - np.asarray(x, dtype=float) - theta.alpha)
        return r, 1.0 - r ** 2


class TestGaussianApprox:
    def test_exact_for_linear_gaussian(self, gaussian_model, gaussian_data, theta):
        chain = gaussian_approx(gaussian_model, gaussian_data, theta)
        Q = ar1_prior_precision(gaussian_data.T, theta).to_dense()
        posterior_prec = Q + np.eye(gaussian_data.T)
        expected_mean = np.linalg.solve(posterior_prec, gaussian_data.y - theta.alpha)
        np.testing.assert_allclose(chain.mean, expected_mean, atol=1e-10)
        np.testing.assert_allclose(chain.prec.to_dense(), posterior_prec, atol=1e-12)
        np.testing.assert_allclose(chain.marginal_variances, np.diag(np.linalg.inv(posterior_prec)), rtol=1e-9)

    def test_poisson_mode_is_stationary(self, poisson_model, poisson_data, theta):
        y = poisson_data.y
        Q = ar1_prior_precision(poisson_data.T, theta)
        result = newton_mode(poisson_model, y, theta, Q)
        grad_obs, _ = poisson_model.observation_derivatives(y, result.mode, theta)
        assert np.max(np.abs(grad_obs - Q.matvec(result.mode))) <= 1e-8
        assert np.all(np.diff(result.history) >= -1e-9)

    def test_logpdf_matches_dense(self, poisson_model, poisson_data, theta, rng):
        chain = gaussian_approx(poisson_model, poisson_data, theta)
        x = chain.mean + rng.normal(scale=0.1, size=chain.T)
        cov = dense_oracle(chain.prec).inverse
        assert chain.logpdf(x) == pytest.approx(stats.multivariate_normal.logpdf(x, chain.mean, cov), abs=1e-8)

    def test_conditional_mode_at_joint_mode(self, poisson_model, poisson_data, theta):
        y = poisson_data.y
        Q = ar1_prior_precision(poisson_data.T, theta)
        joint = newton_mode(poisson_model, y, theta, Q)
        i = 7
        conditional = conditional_mode(poisson_model, y, theta, Q, i, joint.mode[i])
        np.testing.assert_allclose(conditional.mode, np.delete(joint.mode, i), atol=1e-7)

    def test_single_count_mode_is_lambert_w(self, poisson_model):
        # T=1, y=0, Q=1, alpha=0: 众数满足 x + e^x = 0，即 x = -W(1)
        theta = HyperParams(0.0, 1.0, 0.0)
        chain = gaussian_approx(poisson_model, np.array([0.0]), theta)
        expected = -special.lambertw(1.0).real
        assert chain.mean[0] == pytest.approx(expected, abs=1e-8)
        assert chain.mean[0] == pytest.approx(-0.5671432904, abs=1e-8)
        assert chain.prec.to_dense()[0, 0] == pytest.approx(1.0 + math.exp(expected), abs=1e-8)

    def test_poisson_mode_matches_dense_newton(self, poisson_model, poisson_data, theta):
        y = poisson_data.y[:20]
        chain = gaussian_approx(poisson_model, y, theta)
        expected = dense_poisson_mode(y, theta)
        np.testing.assert_allclose(chain.mean, expected, atol=1e-7)
        Q = ar1_prior_precision(20, theta).to_dense()
        np.testing.assert_allclose(chain.prec.to_dense(), Q + np.diag(np.exp(expected + theta.alpha)), rtol=1e-6)

    def test_newton_config_from_dict(self):
        config = NewtonConfig.from_config({"newton_tol": 1e-6, "newton_max_iter": 7})
        assert config.tol == 1e-6 and config.max_iter == 7 and config.max_halvings == 30


class TestThetaPosterior:
    def test_laplace_exact_for_gaussian(self, gaussian_model, gaussian_data, theta, prior):
        value = log_theta_posterior(gaussian_model, gaussian_data, theta, prior)
        expected = log_prior(theta, prior) + kalman_loglik(gaussian_data, theta, 1.0)
        assert value == pytest.approx(expected, abs=1e-8)

    def test_matches_three_dimensional_quadrature(self, prior):
        # 计数较大时拉普拉斯误差几乎不随 theta 变化，差值应与精确边际似然一致
        y = np.array([380.0, 420.0, 405.0])
        alpha0 = math.log(400.0)
        thetas = [HyperParams(0.5, 0.3, alpha0), HyperParams(0.2, 0.3, alpha0), HyperParams(0.5, 0.5, alpha0),
                  HyperParams(0.5, 0.3, alpha0 + 0.05), HyperParams(-0.3, 0.4, alpha0 - 0.05)]
        model = PoissonSsm()
        approx, exact = [], []
        for theta in thetas:
            chain = gaussian_approx(model, y, theta)
            Q = ar1_prior_precision(3, theta).to_dense()
            axes = [np.linspace(m - 8 * s, m + 8 * s, 61)
                    for m, s in zip(chain.mean, np.sqrt(chain.marginal_variances))]
            mesh = np.meshgrid(*axes, indexing="ij")
            x = np.stack([g.ravel() for g in mesh], axis=1)
            log_joint = (-0.5 * np.einsum("ni,ij,nj->n", x, Q, x) + 0.5 * np.linalg.slogdet(Q)[1]
                         - 1.5 * math.log(2 * math.pi)
                         + stats.poisson.logpmf(y, np.exp(x + theta.alpha)).sum(axis=1))
            cell = np.prod([a[1] - a[0] for a in axes])
            # 三维梯形法则：边界点权重减半
            trapezoid = np.ones((61, 61, 61))
            for axis in range(3):
                edge = [slice(None)] * 3
                edge[axis] = [0, -1]
                trapezoid[tuple(edge)] *= 0.5
            log_marginal = special.logsumexp(log_joint + np.log(trapezoid.ravel())) + math.log(cell)
            approx.append(log_theta_posterior(model, y, theta, prior, chain=chain))
            exact.append(log_prior(theta, prior) + log_marginal)
        approx, exact = np.array(approx), np.array(exact)
        np.testing.assert_allclose(approx - approx[0], exact - exact[0], atol=1e-3)

    def test_constant_in_observation_density_shifts_by_t_times_constant(self, poisson_model, poisson_data,
                                                                       theta, prior):
        shift = 2.5
        base = log_theta_posterior(poisson_model, poisson_data, theta, prior)
        shifted = log_theta_posterior(ShiftedPoissonSsm(shift), poisson_data, theta, prior)
        assert shifted == pytest.approx(base + poisson_data.T * shift, abs=1e-9)


class TestExploreLogDensity:
    @pytest.fixture
    def grid(self):
        config = InlaConfig(grid_drop=2.7, max_workers=2)
        return explore_log_density(gaussian_log_density, np.zeros(3), config)

    def test_mode_and_hessian(self, grid):
        np.testing.assert_allclose(grid.mode_internal, GAUSS_MEAN, atol=1e-3)
        np.testing.assert_allclose(grid.hessian, GAUSS_PREC, atol=1e-3)
        assert not grid.hessian_fallback

    def test_grid_shape(self, grid):
        # 标准化坐标上保留 |z|^2 <= 5.4 的整数点
        assert len(grid) == 1 + 6 + 12 + 8 + 6 + 24
        assert grid.points[0].z < grid.points[-1].z
        np.testing.assert_allclose(grid.normalized_weights().sum(), 1.0)

    def test_expectation(self, grid):
        for j in range(3):
            assert grid.expectation(lambda u: u[j]) == pytest.approx(GAUSS_MEAN[j], abs=1e-2)

    def test_hyper_marginal_internal_scale(self, grid):
        marginal = hyper_marginal(grid, 2, natural=False)
        assert marginal.integral() == pytest.approx(1.0, abs=1e-6)
        assert marginal.mean() == pytest.approx(GAUSS_MEAN[2], abs=0.05)

    def test_hyper_marginals_natural(self, grid):
        marginals = hyper_marginals(grid)
        assert set(marginals) == {"rho", "sigma", "alpha"}
        assert np.all((marginals["rho"].grid > -1) & (marginals["rho"].grid < 1))
        assert np.all(marginals["sigma"].grid > 0)
        assert marginals["sigma"].integral() == pytest.approx(1.0, abs=1e-6)

    def test_bad_axis(self, grid):
        with pytest.raises(IndexOutOfRange):
            hyper_marginal(grid, 3)

    def test_non_finite_everywhere(self):
        with pytest.raises(OptimFailed):
            explore_log_density(lambda u: -np.inf, np.zeros(2))

    def test_flat_density_without_fallback(self):
        with pytest.raises(HessianNotPD):
            explore_log_density(lambda u: 0.0, np.zeros(2), InlaConfig(hessian_fallback=False))

    def test_flat_density_falls_back(self):
        grid = explore_log_density(lambda u: 0.0, np.zeros(2), InlaConfig(grid_max_steps=3))
        assert grid.hessian_fallback
        np.testing.assert_allclose(grid.hessian, np.eye(2))
        assert len(grid) == 7 * 7


class TestHyperMarginal:
    @pytest.fixture(scope="class")
    def wide_grid(self):
        # 截断阈值取在半整数 |z|^2/2 之间，避免边界点的取舍受舍入影响
        return explore_log_density(gaussian_log_density, np.zeros(3),
                                   InlaConfig(grid_drop=39.75, grid_max_steps=8, max_workers=2))

    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_separable_posterior_matches_analytic(self, wide_grid, j):
        marginal = hyper_marginal(wide_grid, j, natural=False)
        exact = stats.norm.pdf(marginal.grid, GAUSS_MEAN[j], 1.0 / math.sqrt(GAUSS_PREC[j, j]))
        assert np.max(np.abs(marginal.density() - exact)) < 1e-3

    @pytest.mark.parametrize("j", [0, 1, 2])
    def test_single_point_grid_is_spike(self, theta, j):
        value = (theta.rho, theta.sigma, theta.alpha)[j]
        for natural, expected in ((True, value), (False, theta.transformed()[j])):
            marginal = hyper_marginal(ThetaGrid.single_point(theta), j, natural=natural)
            assert marginal.grid.shape == (3,)
            assert np.ptp(marginal.grid) <= 2e-6 * max(1.0, abs(expected))
            assert marginal.mode() == pytest.approx(expected, abs=1e-12)
            assert marginal.mean() == pytest.approx(expected, abs=1e-9)
            assert marginal.integral() == pytest.approx(1.0)

    @pytest.mark.parametrize("factor", [0.25, 1.0, 4.0])
    def test_argmax_invariant_to_scaling(self, factor):
        grid = explore_log_density(lambda u: factor * gaussian_log_density(u) + 7.0, np.zeros(3),
                                   InlaConfig(grid_drop=5.75, max_workers=2))
        for j in range(3):
            marginal = hyper_marginal(grid, j, natural=False)
            spacing = marginal.grid[1] - marginal.grid[0]
            assert marginal.mode() == pytest.approx(GAUSS_MEAN[j], abs=spacing)

    def test_constant_shift_leaves_marginal_unchanged(self, wide_grid):
        shifted = dataclasses.replace(
            wide_grid, points=[dataclasses.replace(p, log_post=p.log_post - 250.0) for p in wide_grid.points])
        for j in range(3):
            np.testing.assert_allclose(hyper_marginal(shifted, j).density(), hyper_marginal(wide_grid, j).density(),
                                       rtol=1e-9)


class TestMarginal1D:
    def test_normal_density(self):
        grid = np.linspace(-8, 10, 2001)
        marginal = Marginal1D.from_log_unnormalized(grid, stats.norm.logpdf(grid, 1.0, 2.0) + 5.0)
        assert marginal.integral() == pytest.approx(1.0, abs=1e-8)
        assert marginal.mean() == pytest.approx(1.0, abs=1e-6)
        assert marginal.sd() == pytest.approx(2.0, abs=1e-4)
        assert marginal.skewness() == pytest.approx(0.0, abs=1e-4)
        assert marginal.mode() == pytest.approx(1.0, abs=1e-2)
        assert marginal.pdf(100.0) == 0.0
        assert list(marginal.to_frame().columns) == ["value", "density"]


class TestLatentMarginals:
    def test_single_point_gaussian(self, poisson_model, poisson_data, theta):
        grid = ThetaGrid.single_point(theta)
        chains = grid_chains(poisson_model, poisson_data, grid)
        marginal = latent_marginal_gaussian(grid, chains, 4)
        assert marginal.mean() == pytest.approx(chains[0].mean[4], abs=1e-6)
        assert marginal.sd() == pytest.approx(math.sqrt(chains[0].marginal_variances[4]), rel=1e-4)

    def test_laplace_equals_gaussian_for_linear_model(self, gaussian_model, gaussian_data, theta):
        grid = ThetaGrid.single_point(theta)
        chains = grid_chains(gaussian_model, gaussian_data, grid)
        gaussian = latent_marginal_gaussian(grid, chains, 3)
        laplace = latent_marginal_laplace(gaussian_model, gaussian_data, grid, 3, chains)
        np.testing.assert_allclose(laplace.density(), gaussian.density(), atol=1e-6)

    def test_duplicate_components_equal_single(self, poisson_model, poisson_data, theta):
        grid = ThetaGrid.single_point(theta)
        chains = grid_chains(poisson_model, poisson_data, grid)
        point = grid.points[0]
        doubled = dataclasses.replace(grid, points=[point, dataclasses.replace(point, index=1)])
        single = latent_marginal_gaussian(grid, chains, 5)
        mixed = latent_marginal_gaussian(doubled, [chains[0], chains[0]], 5)
        np.testing.assert_allclose(mixed.grid, single.grid)
        np.testing.assert_allclose(mixed.density(), single.density(), rtol=1e-12, atol=1e-15)

    def test_laplace_symmetric_likelihood_has_no_skew(self):
        model = LogisticNoiseSsm()
        theta = HyperParams(0.6, 0.8, 0.0)
        y = np.zeros(5)
        grid = ThetaGrid.single_point(theta)
        laplace = latent_marginal_laplace(model, y, grid, 2)
        assert laplace.mean() == pytest.approx(0.0, abs=1e-6)
        assert laplace.skewness() == pytest.approx(0.0, abs=1e-4)

    def test_laplace_length_limit(self, poisson_model, poisson_data, theta):
        grid = ThetaGrid.single_point(theta)
        with pytest.raises(ConfigError):
            latent_marginal_laplace(poisson_model, poisson_data, grid, 0, config=InlaConfig(laplace_max_T=10))

    def test_time_index_checked(self, poisson_model, poisson_data, theta):
        grid = ThetaGrid.single_point(theta)
        chains = grid_chains(poisson_model, poisson_data, grid)
        with pytest.raises(IndexOutOfRange):
            latent_marginal_gaussian(grid, chains, poisson_data.T)


class TestFitInla:
    def test_poisson_fit(self, poisson_model, poisson_data, prior):
        fit = fit_inla(poisson_model, poisson_data, prior, InlaConfig(max_workers=2))
        assert len(fit.grid) >= 1
        assert len(fit.chains) == len(fit.grid)
        np.testing.assert_allclose(fit.grid.normalized_weights().sum(), 1.0)
        summary = fit.latent_summary()
        assert list(summary.columns) == ["t", "mean", "sd"]
        assert summary.shape[0] == poisson_data.T
        assert np.all(summary["sd"] > 0)
        frame = fit.grid.to_frame()
        assert {"rho", "sigma", "alpha", "log_post_unnormalized", "weight"} <= set(frame.columns)
