from .saem import SaemEstimator, run_saem, fit_longitudinal, initialize, posterior_means
from .personalizer import Personalizer, predict_longitudinal, predict_conditional_survival
from .simulator import simulate_cohort, empirical_noise_std

__all__ = [
    "SaemEstimator",
    "run_saem",
    "fit_longitudinal",
    "initialize",
    "posterior_means",
    "Personalizer",
    "predict_longitudinal",
    "predict_conditional_survival",
    "simulate_cohort",
    "empirical_noise_std",
]
