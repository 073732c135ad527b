from src.smc.resampling import resample_systematic, resample_stratified, resample_multinomial, get_resampler
from src.smc.proposals import (
    ProposalChain,
    Proposal,
    BootstrapProposal,
    InlaProposal,
    build_proposal,
    create_proposal,
)
from src.smc.particle_filter import ParticleSystem, FilterOutput, run_filter
from src.smc.replicates import FilterSpec, ReplicateSummary, replicate_filters, summarize

__all__ = ['resample_systematic', 'resample_stratified', 'resample_multinomial', 'get_resampler',
           'ProposalChain', 'Proposal', 'BootstrapProposal', 'InlaProposal', 'build_proposal',
           'create_proposal', 'ParticleSystem', 'FilterOutput', 'run_filter', 'FilterSpec',
           'ReplicateSummary', 'replicate_filters', 'summarize']
