"""
Pydantic models and numeric containers for the joint model.
"""

from .model_core_models import (
    IndividualEffects,
    LongitudinalFixed,
    SurvivalFixed,
    LatentFixedEffects,
    PopulationParams,
    Hyperparams,
    Visit,
    PatientRecord,
    LatentState,
    CohortArrays,
)
from .likelihood_models import LogLikTerms, SufficientStats, DataCounts, RawMaximization
from .saem_models import ProposalStds, SaemConfig, PosteriorWindow, FitResult
from .personalizer_models import FittedModel, PersonalizationResult
from .simulator_models import SimConfig
from .metrics_models import CoverageRate, ParameterRecovery, RecoveryReport, PredictionReport

__all__ = [
    'IndividualEffects',
    'LongitudinalFixed',
    'SurvivalFixed',
    'LatentFixedEffects',
    'PopulationParams',
    'Hyperparams',
    'Visit',
    'PatientRecord',
    'LatentState',
    'CohortArrays',
    'LogLikTerms',
    'SufficientStats',
    'DataCounts',
    'RawMaximization',
    'ProposalStds',
    'SaemConfig',
    'PosteriorWindow',
    'FitResult',
    'FittedModel',
    'PersonalizationResult',
    'SimConfig',
    'CoverageRate',
    'ParameterRecovery',
    'RecoveryReport',
    'PredictionReport',
]
