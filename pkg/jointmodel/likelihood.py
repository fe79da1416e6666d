"""
Complete-data log-likelihood, sufficient statistics and closed-form
maximization updates.

All functions accept either a list of PatientRecord or prepared
CohortArrays; per-patient reductions use np.bincount so sums are always
taken in the same order.
"""
import logging
import math

import numpy as np

from jointmodel.errors import ContractError, ParameterError
from jointmodel.model_core import (
    elapsed_latent,
    log_hazard_from_elapsed,
    log_survival_from_elapsed,
    logistic_from_elapsed,
)
from models.likelihood_models import DataCounts, LogLikTerms, RawMaximization, SufficientStats
from models.model_core_models import Hyperparams, LatentState, PopulationParams, as_cohort
from utils.numerics import LOG_SQRT_2PI, gaussian_logpdf

logger = logging.getLogger(__name__)


def _check_std(name: str, value: float):
    if not (value > 0.0 and math.isfinite(value)):
        raise ParameterError(f"{name} must be a positive finite std, got {value}")


# Per-patient terms

def patient_longitudinal_terms(cohort, z: LatentState, sigma: float) -> np.ndarray:
    """Gaussian log-density of the residuals, summed per patient."""
    _check_std("sigma", sigma)
    cohort = as_cohort(cohort)
    idx = cohort.patient_index
    elapsed = elapsed_latent(z.xi[idx], z.tau[idx], cohort.times)
    fitted = logistic_from_elapsed(z.g, z.v0, elapsed)
    per_visit = gaussian_logpdf(cohort.values, fitted, sigma)
    return np.bincount(idx, weights=per_visit, minlength=cohort.n_patients)


def patient_survival_terms(cohort, z: LatentState) -> np.ndarray:
    """B_i * log h_i(t_e) + log S_i(t_e) per patient; -inf for observed events at psi <= t0."""
    cohort = as_cohort(cohort)
    elapsed = elapsed_latent(z.xi, z.tau, cohort.event_times)
    log_s = log_survival_from_elapsed(z.nu, z.rho, elapsed)
    log_h = log_hazard_from_elapsed(z.xi, z.nu, z.rho, elapsed)
    return np.where(cohort.event_observed, log_h, 0.0) + log_s


def patient_random_effects_terms(z: LatentState, params: PopulationParams) -> np.ndarray:
    return (gaussian_logpdf(z.tau, params.t0, params.sigma_tau)
            + gaussian_logpdf(z.xi, 0.0, params.sigma_xi))


# The four log-likelihood terms

def longitudinal_attachment(records, z: LatentState, params: PopulationParams) -> float:
    _check_std("sigma", params.sigma)
    return float(np.sum(patient_longitudinal_terms(records, z, params.sigma)))


def survival_attachment(records, z: LatentState) -> float:
    terms = patient_survival_terms(records, z)
    if np.any(np.isneginf(terms)):
        return -math.inf
    return float(np.sum(terms))


def random_effects_prior(z: LatentState, params: PopulationParams) -> float:
    _check_std("sigma_tau", params.sigma_tau)
    _check_std("sigma_xi", params.sigma_xi)
    return float(np.sum(patient_random_effects_terms(z, params)))


def fixed_effects_prior(z: LatentState, params: PopulationParams, hyper: Hyperparams) -> float:
    stds = hyper.as_array()
    for name, std in zip(("sigma_g_tilde", "sigma_v0_tilde", "sigma_nu_tilde", "sigma_rho_tilde"), stds):
        _check_std(name, std)
    means = params.latent_means().as_array()
    return float(sum(gaussian_logpdf(x, m, s) for x, m, s in zip(z.fixed_array(), means, stds)))


def total_loglik(records, z: LatentState, params: PopulationParams, hyper: Hyperparams,
                 include_survival: bool = True) -> LogLikTerms:
    """All four terms and their total; -inf propagates."""
    cohort = as_cohort(records)
    return LogLikTerms.from_terms(
        longitudinal_attachment(cohort, z, params),
        survival_attachment(cohort, z) if include_survival else 0.0,
        random_effects_prior(z, params),
        fixed_effects_prior(z, params, hyper),
    )


# Sufficient statistics

def compute_stats(records, z: LatentState, include_survival: bool = True) -> SufficientStats:
    cohort = as_cohort(records)
    idx = cohort.patient_index
    fitted = logistic_from_elapsed(z.g, z.v0, elapsed_latent(z.xi[idx], z.tau[idx], cohort.times))
    y = cohort.values
    if include_survival:
        s4 = patient_survival_terms(cohort, z)
    else:
        s4 = np.zeros(cohort.n_patients)
    return SufficientStats(
        s1=y * y,
        s2=y * fitted,
        s3=fitted * fitted,
        s4=s4,
        s5=z.g_tilde ** 2, s6=z.g_tilde,
        s7=z.v0_tilde ** 2, s8=z.v0_tilde,
        s9=z.nu_tilde ** 2, s10=z.nu_tilde,
        s11=z.rho_tilde ** 2, s12=z.rho_tilde,
        s13=z.tau * z.tau, s14=z.tau.copy(),
        s15=z.xi * z.xi, s16=z.xi.copy(),
    )


def _check_counts(stats: SufficientStats, counts: DataCounts):
    if stats.n_patients != counts.n_patients or stats.n_visits != counts.n_visits:
        raise ContractError(
            f"counts (N={counts.n_patients}, visits={counts.n_visits}) do not match statistics "
            f"(N={stats.n_patients}, visits={stats.n_visits})"
        )
    for name in ("s4", "s15", "s16"):
        if getattr(stats, name).shape[0] != counts.n_patients:
            raise ContractError(f"{name} has {getattr(stats, name).shape[0]} entries, expected {counts.n_patients}")
    for name in ("s2", "s3"):
        if getattr(stats, name).shape[0] != counts.n_visits:
            raise ContractError(f"{name} has {getattr(stats, name).shape[0]} entries, expected {counts.n_visits}")


def _gaussian_from_stats(n: float, sum_sq: float, sum_lin: float, mean: float, std: float) -> float:
    """sum over n draws of log N(x | mean, std^2) written through sum x^2 and sum x."""
    return (-n * (math.log(std) + LOG_SQRT_2PI)
            - sum_sq / (2.0 * std ** 2)
            + mean * sum_lin / std ** 2
            - n * mean ** 2 / (2.0 * std ** 2))


def stats_to_loglik(stats: SufficientStats, params: PopulationParams, hyper: Hyperparams,
                    counts: DataCounts, xi_mean: float = 0.0) -> float:
    """
    Complete log-likelihood rebuilt from the sufficient statistics only.

    `xi_mean` defaults to the identified value 0; the maximization checks pass
    the freshly maximized mean instead.
    """
    _check_counts(stats, counts)
    for name in ("sigma", "sigma_tau", "sigma_xi"):
        _check_std(name, getattr(params, name))

    sigma = params.sigma
    residual_sq = float(np.sum(stats.s1) - 2.0 * np.sum(stats.s2) + np.sum(stats.s3))
    total = -counts.n_visits * (math.log(sigma) + LOG_SQRT_2PI) - residual_sq / (2.0 * sigma ** 2)

    if np.any(np.isneginf(stats.s4)):
        return -math.inf
    total += float(np.sum(stats.s4))

    fixed = (
        (stats.s5, stats.s6, params.mean_g_tilde, hyper.sigma_g_tilde),
        (stats.s7, stats.s8, params.mean_v0_tilde, hyper.sigma_v0_tilde),
        (stats.s9, stats.s10, params.mean_nu_tilde, hyper.sigma_nu_tilde),
        (stats.s11, stats.s12, params.mean_rho_tilde, hyper.sigma_rho_tilde),
    )
    for sum_sq, sum_lin, mean, std in fixed:
        _check_std("hyperparameter", std)
        total += _gaussian_from_stats(1.0, sum_sq, sum_lin, mean, std)

    n = counts.n_patients
    total += _gaussian_from_stats(n, float(np.sum(stats.s13)), float(np.sum(stats.s14)), params.t0, params.sigma_tau)
    total += _gaussian_from_stats(n, float(np.sum(stats.s15)), float(np.sum(stats.s16)), xi_mean, params.sigma_xi)
    return total


# Maximization

def maximize_raw(stats: SufficientStats, counts: DataCounts) -> RawMaximization:
    """
    Closed-form argmax of stats_to_loglik in theta.

    sigma^2 is normalized by the total visit count and sigma_tau^2 by N: these
    are the denominators of the corresponding Gaussian terms.
    """
    _check_counts(stats, counts)
    if counts.n_patients == 0 or counts.n_visits == 0:
        raise ContractError("maximization needs at least one patient and one visit")

    n = float(counts.n_patients)
    sigma2 = float(np.sum(stats.s1) - 2.0 * np.sum(stats.s2) + np.sum(stats.s3)) / counts.n_visits

    tau_mean = float(np.sum(stats.s14)) / n
    sigma2_tau = (float(np.sum(stats.s13)) - 2.0 * tau_mean * float(np.sum(stats.s14))) / n + tau_mean ** 2
    xi_mean = float(np.sum(stats.s16)) / n
    sigma2_xi = (float(np.sum(stats.s15)) - 2.0 * xi_mean * float(np.sum(stats.s16))) / n + xi_mean ** 2

    return RawMaximization(
        sigma2=sigma2,
        mean_g_tilde=float(stats.s6),
        mean_v0_tilde=float(stats.s8),
        mean_nu_tilde=float(stats.s10),
        mean_rho_tilde=float(stats.s12),
        tau_mean=tau_mean,
        sigma2_tau=sigma2_tau,
        xi_mean=xi_mean,
        sigma2_xi=sigma2_xi,
    )


def _floored_std(name: str, variance: float, floor: float) -> float:
    if not variance > floor:
        logger.warning(f"Variance update for {name} = {variance:.3e} is below the floor, using {floor:.1e}")
        variance = floor
    return math.sqrt(variance)


def maximization_step(stats: SufficientStats, counts: DataCounts, variance_floor: float = 1e-9) -> PopulationParams:
    """Maximize theta, floor the variances, then apply t0 := tau_mean (the xi mean is dropped)."""
    raw = maximize_raw(stats, counts)
    return PopulationParams(
        sigma_tau=_floored_std("sigma_tau", raw.sigma2_tau, variance_floor),
        sigma_xi=_floored_std("sigma_xi", raw.sigma2_xi, variance_floor),
        t0=raw.tau_mean,
        mean_g_tilde=raw.mean_g_tilde,
        mean_v0_tilde=raw.mean_v0_tilde,
        mean_nu_tilde=raw.mean_nu_tilde,
        mean_rho_tilde=raw.mean_rho_tilde,
        sigma=_floored_std("sigma", raw.sigma2, variance_floor),
    )


def recenter_log_rates(z: LatentState, stats: SufficientStats, shift: float) -> tuple[LatentState, SufficientStats]:
    """
    Move `shift` out of every xi_i and into v0_tilde and nu_tilde.

    exp(xi) * v0 and exp(xi) / nu are unchanged, so both data attachments are
    invariant; the accumulated statistics are rewritten in the new coordinates.
    """
    c = float(shift)
    state = z.copy()
    state.xi = z.xi - c
    state.v0_tilde = z.v0_tilde + c
    state.nu_tilde = z.nu_tilde + c

    moved = stats.copy()
    moved.s15 = stats.s15 - 2.0 * c * stats.s16 + c * c
    moved.s16 = stats.s16 - c
    moved.s7 = stats.s7 + 2.0 * c * stats.s8 + c * c
    moved.s8 = stats.s8 + c
    moved.s9 = stats.s9 + 2.0 * c * stats.s10 + c * c
    moved.s10 = stats.s10 + c
    return state, moved
