"""
Recovery metrics for simulation studies and prediction metrics for survival
and longitudinal forecasts.

Relative metrics are in percent. Survival metrics use inverse probability of
censoring weights from a Kaplan-Meier fit of the censoring distribution.
"""
import logging
import math
from typing import Optional, Sequence

import numpy as np
from lifelines import KaplanMeierFitter
from scipy.integrate import trapezoid
from scipy.stats import beta

from jointmodel.errors import (
    ContractError,
    DomainError,
    InestimableWeightsError,
    InputError,
    UndefinedMetricError,
)
from models.metrics_models import CoverageRate, ParameterRecovery, RecoveryReport
from models.model_core_models import PopulationParams

logger = logging.getLogger(__name__)

# Parameters scored in recovery studies (natural scale).
RECOVERY_PARAMETERS = ("sigma_tau", "sigma_xi", "t0", "g", "v0", "nu", "rho", "sigma")


# Recovery metrics

def _estimates(estimates) -> np.ndarray:
    values = np.asarray(estimates, dtype=float).ravel()
    if values.size == 0:
        raise InputError("at least one estimate is required")
    if not np.all(np.isfinite(values)):
        raise DomainError("estimates must be finite")
    return values


def _truth(truth) -> np.ndarray:
    truth = np.asarray(truth, dtype=float)
    if np.any(truth == 0.0) or not np.all(np.isfinite(truth)):
        raise DomainError("relative metrics need a finite non-zero truth")
    return truth


def ree(estimate, truth) -> np.ndarray:
    """Relative estimation error(s) (estimate - truth) / truth * 100."""
    return (_estimates(estimate) - _truth(truth)) / _truth(truth) * 100.0


def relative_bias(estimates, truth) -> float:
    return float(np.mean(ree(estimates, truth)))


def rrmse(estimates, truth) -> float:
    return float(math.sqrt(np.mean(ree(estimates, truth) ** 2)))


def empirical_se(estimates) -> tuple[float, float]:
    """(SE_emp, RSE_emp): sample std over fits and its ratio to the mean estimate, in percent."""
    values = _estimates(estimates)
    if values.size < 2:
        raise InputError("empirical SE needs at least two estimates")
    se = float(np.std(values, ddof=1))
    mean = float(np.mean(values))
    rse = se / abs(mean) * 100.0 if mean != 0.0 else math.nan
    return se, rse


def clopper_pearson(n_success: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Exact binomial CI from Beta quantiles."""
    alpha = 1.0 - level
    low = 0.0 if n_success == 0 else float(beta.ppf(alpha / 2.0, n_success, n - n_success + 1))
    high = 1.0 if n_success == n else float(beta.ppf(1.0 - alpha / 2.0, n_success + 1, n - n_success))
    return low, high


def coverage_rate(intervals: Sequence[tuple[float, float]], truth) -> CoverageRate:
    if len(intervals) == 0:
        raise InputError("coverage needs at least one interval")
    bounds = np.asarray(intervals, dtype=float).reshape(-1, 2)
    truth = np.broadcast_to(np.asarray(truth, dtype=float), (bounds.shape[0],))
    covered = int(np.count_nonzero((bounds[:, 0] <= truth) & (truth <= bounds[:, 1])))
    n = bounds.shape[0]
    low, high = clopper_pearson(covered, n)
    return CoverageRate(rate=covered / n, ci_low=low, ci_high=high, n_covered=covered, n=n)


def icc(estimated, truth) -> float:
    """ICC(2,1): two-way random effects, absolute agreement, single measure."""
    x = np.column_stack([np.asarray(estimated, dtype=float), np.asarray(truth, dtype=float)])
    n, k = x.shape
    if n < 2:
        raise InputError("ICC needs at least two subjects")
    if np.var(x[:, 0]) == 0.0 and np.var(x[:, 1]) == 0.0:
        raise DomainError("ICC is undefined when both vectors are constant")

    grand = x.mean()
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    ms_rows = k * np.sum((row_means - grand) ** 2) / (n - 1)
    ms_cols = n * np.sum((col_means - grand) ** 2) / (k - 1)
    residual = x - row_means[:, None] - col_means[None, :] + grand
    ms_error = np.sum(residual ** 2) / ((n - 1) * (k - 1))

    denominator = ms_rows + (k - 1) * ms_error + k * (ms_cols - ms_error) / n
    if denominator == 0.0:
        raise DomainError("ICC denominator is zero")
    return float(np.clip((ms_rows - ms_error) / denominator, -1.0, 1.0))


def _parameter_recovery(name: str, estimates: np.ndarray, truth: np.ndarray) -> ParameterRecovery:
    errors = ree(estimates, truth)
    se = rse = coverage = None
    if estimates.size >= 2:
        se, rse = empirical_se(estimates)
        coverage = coverage_rate([(e - 1.96 * se, e + 1.96 * se) for e in estimates], truth)
    return ParameterRecovery(
        name=name,
        truth=float(np.mean(truth)),
        mean_estimate=float(np.mean(estimates)),
        rb=float(np.mean(errors)),
        rrmse=float(math.sqrt(np.mean(errors ** 2))),
        ree=errors.tolist(),
        se=se,
        rse=rse,
        coverage=coverage,
    )


def build_recovery_report(estimates: Sequence[PopulationParams],
                          truths: Sequence[PopulationParams] | PopulationParams,
                          icc_tau: Optional[float] = None,
                          icc_xi: Optional[float] = None) -> RecoveryReport:
    """
    Score M fitted parameter sets. `truths` is one PopulationParams or one per
    fit (the noise std truth differs per simulated dataset).
    """
    if len(estimates) == 0:
        raise InputError("no fits to score")
    if isinstance(truths, PopulationParams):
        truths = [truths] * len(estimates)
    if len(truths) != len(estimates):
        raise ContractError(f"{len(truths)} truths for {len(estimates)} fits")

    parameters = []
    for name in RECOVERY_PARAMETERS:
        values = np.array([getattr(p, name) for p in estimates])
        truth = np.array([getattr(t, name) for t in truths])
        parameters.append(_parameter_recovery(name, values, truth))
    return RecoveryReport(n_datasets=len(estimates), parameters=parameters, icc_tau=icc_tau, icc_xi=icc_xi)


# Survival metrics

def _survival_inputs(event_times, event_flags) -> tuple[np.ndarray, np.ndarray]:
    times = np.asarray(event_times, dtype=float)
    flags = np.asarray(event_flags, dtype=bool)
    if times.shape != flags.shape or times.ndim != 1:
        raise ContractError("event times and flags must be aligned vectors")
    if times.size == 0:
        raise InputError("no patients to score")
    return times, flags


class CensoringDistribution:
    """Kaplan-Meier estimate G of the censoring survival function."""

    def __init__(self, event_times, event_flags):
        times, flags = _survival_inputs(event_times, event_flags)
        fitter = KaplanMeierFitter().fit(times, event_observed=~flags)
        self.timeline = fitter.survival_function_.index.to_numpy(dtype=float)
        self.values = fitter.survival_function_.iloc[:, 0].to_numpy(dtype=float)

    def at(self, t) -> np.ndarray:
        """G(t), right-continuous."""
        pos = np.searchsorted(self.timeline, np.asarray(t, dtype=float), side="right") - 1
        return np.where(pos >= 0, self.values[np.maximum(pos, 0)], 1.0)

    def left_limit(self, t) -> np.ndarray:
        """G(t-)."""
        pos = np.searchsorted(self.timeline, np.asarray(t, dtype=float), side="left") - 1
        return np.where(pos >= 0, self.values[np.maximum(pos, 0)], 1.0)


def c_index(risk_scores, event_times, event_flags, horizon: float) -> float:
    """
    Harrell-type concordance truncated at `horizon`: pairs (i, j) with an
    observed event T_i <= horizon and T_i < T_j; risk ties count 1/2.
    """
    times, flags = _survival_inputs(event_times, event_flags)
    risk = np.asarray(risk_scores, dtype=float)
    if risk.shape != times.shape:
        raise ContractError("risk scores and event times must be aligned")

    anchors = flags & (times <= horizon)
    comparable = anchors[:, None] & (times[:, None] < times[None, :])
    n_pairs = int(np.count_nonzero(comparable))
    if n_pairs == 0:
        raise UndefinedMetricError(f"no comparable pairs at horizon {horizon}")
    diff = risk[:, None] - risk[None, :]
    score = np.where(diff > 0, 1.0, np.where(diff == 0, 0.5, 0.0))
    return float(np.sum(score[comparable]) / n_pairs)


def _auc_at(risk: np.ndarray, times: np.ndarray, flags: np.ndarray, t: float,
            censoring: CensoringDistribution) -> float:
    cases = flags & (times <= t)
    controls = times > t
    if not np.any(cases) or not np.any(controls):
        raise UndefinedMetricError(f"cumulative dynamic AUC at {t} needs both cases and controls")
    g_cases = censoring.left_limit(times[cases])
    if np.any(g_cases <= 0.0):
        raise InestimableWeightsError(f"censoring survival is zero before a case at time <= {t}")

    weights = 1.0 / g_cases
    diff = risk[cases][:, None] - risk[controls][None, :]
    score = np.where(diff > 0, 1.0, np.where(diff == 0, 0.5, 0.0))
    return float(np.sum(weights[:, None] * score) / (np.sum(weights) * np.count_nonzero(controls)))


def cumulative_dynamic_auc(survival_predictions, event_times, event_flags,
                           times: Sequence[float]) -> tuple[float, list[float]]:
    """
    IPCW cumulative/dynamic AUC at each time and their arithmetic mean.

    `survival_predictions` is (n_patients, n_times); the risk at time t is 1 - S(t).
    """
    event_times, flags = _survival_inputs(event_times, event_flags)
    surv = np.asarray(survival_predictions, dtype=float).reshape(event_times.size, -1)
    times = [float(t) for t in times]
    if surv.shape[1] != len(times):
        raise ContractError(f"{surv.shape[1]} prediction columns for {len(times)} times")

    censoring = CensoringDistribution(event_times, flags)
    aucs = [_auc_at(1.0 - surv[:, j], event_times, flags, t, censoring) for j, t in enumerate(times)]
    return float(np.mean(aucs)), aucs


def brier_score(survival_predictions, event_times, event_flags, times: Sequence[float],
                censoring: Optional[CensoringDistribution] = None) -> np.ndarray:
    """IPCW Brier score at each time (Graf et al. weighting)."""
    event_times, flags = _survival_inputs(event_times, event_flags)
    surv = np.asarray(survival_predictions, dtype=float).reshape(event_times.size, -1)
    times = np.asarray(times, dtype=float)
    if surv.shape[1] != times.size:
        raise ContractError(f"{surv.shape[1]} prediction columns for {times.size} times")
    censoring = censoring or CensoringDistribution(event_times, flags)

    g_own = censoring.left_limit(event_times)
    scores = np.empty(times.size)
    for j, t in enumerate(times):
        cases = flags & (event_times <= t)
        survivors = event_times > t
        g_t = float(censoring.at(t))
        if (np.any(cases) and np.any(g_own[cases] <= 0.0)) or (np.any(survivors) and g_t <= 0.0):
            raise InestimableWeightsError(f"censoring survival is zero where weights are needed at {t}")
        case_terms = np.where(cases, surv[:, j] ** 2 / np.where(cases, g_own, 1.0), 0.0)
        survivor_terms = np.where(survivors, (1.0 - surv[:, j]) ** 2 / (g_t if g_t > 0 else 1.0), 0.0)
        scores[j] = float(np.mean(case_terms + survivor_terms))
    return scores


def integrated_brier(survival_predictions, event_times, event_flags, grid: Sequence[float]) -> float:
    """Trapezoid integral of the Brier score over the grid, divided by its span."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or not np.all(np.diff(grid) > 0):
        raise ContractError("the IBS grid needs at least two increasing times")
    scores = brier_score(survival_predictions, event_times, event_flags, grid)
    return float(trapezoid(scores, grid) / (grid[-1] - grid[0]))


def ibs_grid(max_horizon: float, n_points: int = 30) -> np.ndarray:
    """n_points equally spaced offsets in (0, max_horizon]."""
    return np.linspace(max_horizon / n_points, max_horizon, n_points)


# Longitudinal errors

def mae_mse(predictions, observations, scale: float = 48.0) -> tuple[float, float]:
    """MAE and MSE after rescaling normalized scores to the raw scale."""
    pred = np.asarray(predictions, dtype=float)
    obs = np.asarray(observations, dtype=float)
    if pred.shape != obs.shape:
        raise ContractError("predictions and observations must be aligned")
    if pred.size == 0:
        raise InputError("no predictions to score")
    delta = (pred - obs) * scale
    return float(np.mean(np.abs(delta))), float(np.mean(delta ** 2))
