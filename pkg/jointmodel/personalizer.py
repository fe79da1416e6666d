"""
Personalization of unseen patients and the predictions built on it.

Random effects (xi, tau) are the MAP of their posterior given the visits and
an event censored at the last used visit; the fitted fixed effects are frozen.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from jointmodel.errors import DegenerateConditionError, DomainError
from jointmodel.model_core import elapsed_latent, log_survival_from_elapsed, logistic_from_elapsed
from models.model_core_models import IndividualEffects, PatientRecord
from models.personalizer_models import FittedModel, PersonalizationResult
from utils.numerics import gaussian_logpdf

logger = logging.getLogger(__name__)

# returned to the simplex in place of a non-finite objective
_WORST = 1e300


def predict_longitudinal(effects: IndividualEffects, fitted: FittedModel, times) -> np.ndarray:
    """Noise-free normalized scores gamma0(psi(t))."""
    fx = fitted.latent_fixed
    elapsed = elapsed_latent(effects.xi, effects.tau, np.asarray(times, dtype=float))
    return logistic_from_elapsed(math.exp(fx.g_tilde), math.exp(fx.v0_tilde), elapsed)


def predict_conditional_survival(effects: IndividualEffects, fitted: FittedModel,
                                 t_last_visit: float, horizons) -> np.ndarray:
    """S(h) / S(t_last_visit) at absolute times h >= t_last_visit, clipped to (0, 1]."""
    horizons = np.asarray(horizons, dtype=float)
    if np.any(horizons < t_last_visit):
        raise DomainError(f"horizons must not precede the conditioning time {t_last_visit}")
    sx = fitted.latent_fixed.survival()

    log_s_last = float(log_survival_from_elapsed(
        sx.nu, sx.rho, elapsed_latent(effects.xi, effects.tau, t_last_visit)))
    if not math.isfinite(log_s_last):
        raise DegenerateConditionError(f"survival at the conditioning time {t_last_visit} is zero")

    log_s = log_survival_from_elapsed(sx.nu, sx.rho, elapsed_latent(effects.xi, effects.tau, horizons))
    ratio = np.exp(log_s - log_s_last)
    return np.clip(ratio, np.finfo(float).tiny, 1.0)


class Personalizer:
    """MAP estimation of (xi, tau) for new patients under a fitted model."""

    def __init__(self, fitted: FittedModel, n_threads: int = 1, tolerance: float = 1e-8,
                 max_evals: int = 4000):
        self.fitted = fitted
        self.n_threads = max(1, n_threads)
        self.tolerance = tolerance
        self.max_evals = max_evals

        fx = fitted.latent_fixed
        self._g = math.exp(fx.g_tilde)
        self._v0 = math.exp(fx.v0_tilde)
        self._nu = math.exp(-fx.nu_tilde)
        self._rho = math.exp(fx.rho_tilde)

    def objective(self, record: PatientRecord, xi: float, tau: float) -> float:
        """
        Log-posterior of (xi, tau): longitudinal attachment, survival of an
        event censored at the last visit, and the random-effects prior.
        """
        params = self.fitted.params
        times, values = record.times, record.values
        fitted_values = logistic_from_elapsed(self._g, self._v0, elapsed_latent(xi, tau, times))
        value = float(np.sum(gaussian_logpdf(values, fitted_values, params.sigma)))
        value += float(log_survival_from_elapsed(
            self._nu, self._rho, elapsed_latent(xi, tau, record.last_visit_time)))
        value += float(gaussian_logpdf(tau, params.t0, params.sigma_tau))
        value += float(gaussian_logpdf(xi, 0.0, params.sigma_xi))
        return value

    def _moment_guess(self, record: PatientRecord) -> np.ndarray:
        """tau placing the patient's mean point on the population curve, xi = 0."""
        value = min(max(float(np.mean(record.values)), 0.01), 0.99)
        slope = self._v0 * (self._g + 1.0) ** 2 / self._g
        elapsed = -math.log((1.0 / value - 1.0) / self._g) / slope
        return np.array([0.0, float(np.mean(record.times)) - elapsed])

    def _minimize(self, record: PatientRecord, x0: np.ndarray):
        def negative(x):
            value = self.objective(record, float(x[0]), float(x[1]))
            return -value if math.isfinite(value) else _WORST

        return minimize(
            negative, x0, method="Nelder-Mead",
            options={"fatol": self.tolerance, "xatol": self.tolerance, "maxfev": self.max_evals},
        )

    def personalize(self, record: PatientRecord,
                    warm_start: Optional[IndividualEffects] = None) -> PersonalizationResult:
        """
        Multi-start Nelder-Mead from the prior mode, a moment guess, and the
        warm start (or a restart from the best point so far). Never raises on
        optimizer failure: the best iterate is returned with converged=False.
        """
        prior_mode = np.array([0.0, self.fitted.params.t0])
        n_evals = 0
        best = None
        try:
            starts = [prior_mode, self._moment_guess(record)]
            for x0 in starts:
                result = self._minimize(record, x0)
                n_evals += int(result.nfev)
                if best is None or result.fun < best.fun:
                    best = result
            restart = (np.array([warm_start.xi, warm_start.tau]) if warm_start is not None else best.x)
            result = self._minimize(record, restart)
            n_evals += int(result.nfev)
            if result.fun <= best.fun:
                best = result
        except Exception as e:
            logger.error(f"Personalization of {record.id} failed: {e}")

        if best is None or not math.isfinite(best.fun) or best.fun >= _WORST:
            logger.warning(f"Personalization of {record.id} fell back to the prior mode")
            xi, tau = prior_mode
            return PersonalizationResult(
                patient_id=record.id,
                effects=IndividualEffects(xi=float(xi), tau=float(tau)),
                map_objective=self.objective(record, float(xi), float(tau)),
                converged=False,
                n_evals=n_evals,
            )

        if not best.success:
            logger.warning(f"Personalization of {record.id} did not converge: {best.message}")
        return PersonalizationResult(
            patient_id=record.id,
            effects=IndividualEffects(xi=float(best.x[0]), tau=float(best.x[1])),
            map_objective=-float(best.fun),
            converged=bool(best.success),
            n_evals=n_evals,
        )

    def personalize_many(self, records: Sequence[PatientRecord], k_visits: Optional[int] = None,
                         warm_starts: Optional[dict[str, IndividualEffects]] = None) -> list[PersonalizationResult]:
        """Personalize every record (optionally on its first k visits); results keep input order."""
        if k_visits is not None:
            records = [r.truncated(k_visits) for r in records]
        warm_starts = warm_starts or {}

        def run(record):
            return self.personalize(record, warm_starts.get(record.id))

        if self.n_threads == 1:
            results = [run(r) for r in records]
        else:
            with ThreadPoolExecutor(max_workers=self.n_threads) as pool:
                results = list(pool.map(run, records))

        n_failed = sum(not r.converged for r in results)
        logger.info(f"Personalized {len(results)} patient(s); {n_failed} not converged")
        return results
