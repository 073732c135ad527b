from src.inla.gaussian_approx import GaussianChain, NewtonConfig, gaussian_approx, newton_mode, conditional_mode
from src.inla.theta_grid import (
    InlaConfig,
    InlaFit,
    ThetaGrid,
    ThetaPoint,
    explore_log_density,
    explore_theta,
    fit_inla,
    grid_chains,
    log_theta_posterior,
)
from src.inla.marginals import (
    Marginal1D,
    hyper_marginal,
    hyper_marginals,
    latent_marginal_gaussian,
    latent_marginal_laplace,
)

__all__ = ['GaussianChain', 'NewtonConfig', 'gaussian_approx', 'newton_mode', 'conditional_mode',
           'InlaConfig', 'InlaFit', 'ThetaGrid', 'ThetaPoint', 'explore_log_density', 'explore_theta',
           'fit_inla', 'grid_chains', 'log_theta_posterior', 'Marginal1D', 'hyper_marginal',
           'hyper_marginals', 'latent_marginal_gaussian', 'latent_marginal_laplace']
