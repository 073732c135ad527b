from src.mcmc.pmmh import (
    PmmhConfig,
    PmmhChain,
    pmmh_run,
    pmmh_run_chains,
    init_from_inla,
    log_acceptance_ratio,
)
from src.mcmc.chain_summary import chain_summary, histogram_frame, histogram_mode

__all__ = ['PmmhConfig', 'PmmhChain', 'pmmh_run', 'pmmh_run_chains', 'init_from_inla', 'log_acceptance_ratio',
           'chain_summary', 'histogram_frame', 'histogram_mode']
