from src.experiments.experiment_config import ExperimentConfig, experiment_from_preset, resolve_preset
from src.experiments.commands import (
    cmd_simulate,
    cmd_inla_fit,
    cmd_pf_run,
    cmd_pf_compare,
    cmd_pmmh,
    cmd_full_study,
    StudyReport,
)
from src.experiments.acceptance import CriterionResult, evaluate_study

__all__ = ['ExperimentConfig', 'experiment_from_preset', 'resolve_preset', 'cmd_simulate', 'cmd_inla_fit',
           'cmd_pf_run', 'cmd_pf_compare', 'cmd_pmmh', 'cmd_full_study', 'StudyReport', 'CriterionResult',
           'evaluate_study']
