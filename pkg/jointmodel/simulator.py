"""
Synthetic cohorts from the joint model.

Per patient: random effects, a first visit after the time shift, a visit grid
over the follow-up, noisy scores around the logistic curve and a Weibull event
in latent time. The follow-up closes on the first scheduled visit at or past
the follow-up horizon. The event stops the follow-up; an event past the
closing visit is censored at the last visit. Each patient has its own RNG
stream derived from (seed, index), so the cohort does not depend on
generation order.
"""
import logging
import math

import numpy as np

from jointmodel.errors import InputError
from jointmodel.model_core import elapsed_latent, logistic_from_elapsed
from models.model_core_models import IndividualEffects, PatientRecord, Visit
from models.simulator_models import SimConfig
from utils.rng import patient_rng

logger = logging.getLogger(__name__)

ONE_DAY = 1.0 / 365.25
_VALUE_EPS = 1e-9
_MAX_REDRAWS = 1000


def _visit_gap(rng: np.random.Generator, config: SimConfig) -> float:
    """Positive gap in years; non-positive draws are redrawn, floor of one day."""
    while True:
        months = rng.normal(config.visit_gap_mean_months, config.visit_gap_std_months)
        if months > 0.0:
            return max(months / 12.0, ONE_DAY)


def _noisy_values(rng: np.random.Generator, config: SimConfig, mode: np.ndarray) -> np.ndarray:
    if config.noise == "beta":
        p = config.beta_concentration
        alpha = mode * (p - 2.0) + 1.0
        beta = (1.0 - mode) * (p - 2.0) + 1.0
        values = rng.beta(alpha, beta)
    else:
        values = mode + rng.normal(0.0, config.noise_std, size=mode.shape) if config.noise_std > 0 else mode.copy()
    return np.clip(values, _VALUE_EPS, 1.0 - _VALUE_EPS)


def _simulate_patient(index: int, config: SimConfig) -> tuple[PatientRecord, IndividualEffects]:
    rng = patient_rng(config.seed, index)
    patient_id = f"P{index:04d}"

    for _ in range(_MAX_REDRAWS):
        xi = rng.normal(0.0, config.sigma_xi)
        tau = rng.normal(config.t0, config.sigma_tau)
        first_visit = tau + rng.normal(config.delta_f_mean, config.delta_f_std)
        followup_end = first_visit + max(rng.normal(config.followup_mean, config.followup_std), 0.0)

        times = [first_visit]
        while times[-1] < followup_end:
            times.append(times[-1] + _visit_gap(rng, config))
        times = np.array(times)
        closing_visit = times[-1]

        mode = logistic_from_elapsed(config.g, config.v0, elapsed_latent(xi, tau, times))
        values = _noisy_values(rng, config, mode)
        event_time = tau + math.exp(-xi) * config.nu * rng.weibull(config.rho)

        kept = times <= event_time
        if not np.any(kept):
            continue

        times, values = times[kept], values[kept]
        observed = event_time <= closing_visit
        record = PatientRecord(
            id=patient_id,
            visits=[Visit(time=float(t), value=float(v)) for t, v in zip(times, values)],
            event_time=float(event_time) if observed else float(times[-1]),
            event_observed=bool(observed),
        )
        return record, IndividualEffects(xi=float(xi), tau=float(tau))

    raise InputError(f"patient {patient_id}: no visit before the event after {_MAX_REDRAWS} draws")


def simulate_cohort(config: SimConfig) -> tuple[list[PatientRecord], dict[str, IndividualEffects]]:
    """Records plus the true random effects of every patient."""
    records, truth = [], {}
    for i in range(config.n_patients):
        record, effects = _simulate_patient(i, config)
        records.append(record)
        truth[record.id] = effects

    n_visits = sum(len(r.visits) for r in records)
    censoring = 1.0 - sum(r.event_observed for r in records) / len(records)
    logger.info(
        f"Simulated {len(records)} patients (seed {config.seed}): {n_visits} visits, "
        f"censoring rate {censoring:.1%}"
    )
    return records, truth


def empirical_noise_std(records: list[PatientRecord], truth: dict[str, IndividualEffects],
                        config: SimConfig) -> float:
    """Root mean squared deviation of the scores from their noise-free curves."""
    residuals = []
    for record in records:
        effects = truth[record.id]
        curve = logistic_from_elapsed(config.g, config.v0, elapsed_latent(effects.xi, effects.tau, record.times))
        residuals.append(record.values - curve)
    residuals = np.concatenate(residuals)
    return float(np.sqrt(np.mean(residuals ** 2)))
