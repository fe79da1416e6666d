"""
Structural functions of the joint model: latent disease age, logistic
longitudinal curve, Weibull survival and hazard on the latent age axis.

Scalar functions take the pydantic domain types; the vectorized helpers
below them work on plain arrays and are what the likelihood uses.
"""
import logging
import math

import numpy as np

from jointmodel.errors import DomainError
from models.model_core_models import IndividualEffects, LongitudinalFixed, SurvivalFixed
from utils.numerics import all_finite, clamp_exp_arg

logger = logging.getLogger(__name__)


def latent_age(effects: IndividualEffects, t0: float, t: float) -> float:
    """psi(t) = exp(xi) * (t - tau) + t0."""
    if not all_finite(effects.xi, effects.tau, t0, t):
        raise DomainError(f"latent_age needs finite inputs, got xi={effects.xi}, tau={effects.tau}, t0={t0}, t={t}")
    return math.exp(effects.xi) * (t - effects.tau) + t0


def logistic_curve(fx: LongitudinalFixed, psi: float) -> float:
    """Normalized score at latent age psi; equals 1/(1+g) at t0."""
    if not all_finite(psi, fx.t0):
        raise DomainError(f"logistic_curve needs a finite latent age, got psi={psi}")
    return float(logistic_from_elapsed(fx.g, fx.v0, np.asarray(psi - fx.t0, dtype=float)))


def survival(sx: SurvivalFixed, t0: float, psi: float) -> float:
    """S0(psi): 1 before t0, Weibull(nu, rho) survival of psi - t0 after."""
    if not all_finite(psi, t0):
        raise DomainError(f"survival needs a finite latent age, got psi={psi}, t0={t0}")
    if psi <= t0:
        return 1.0
    return math.exp(-(((psi - t0) / sx.nu) ** sx.rho))


def hazard(effects: IndividualEffects, sx: SurvivalFixed, t0: float, t: float) -> float:
    """
    Hazard in chronological time, h(t) = -S'(t)/S(t).

    At psi == t0 with rho < 1 the hazard is singular and math.inf is returned.
    """
    psi = latent_age(effects, t0, t)
    if psi < t0:
        return 0.0
    rate = math.exp(effects.xi) / sx.nu
    if psi == t0:
        if sx.rho == 1.0:
            return rate
        return math.inf if sx.rho < 1.0 else 0.0
    return sx.rho * rate * ((psi - t0) / sx.nu) ** (sx.rho - 1.0)


# Vectorized helpers. `elapsed` is psi - t0 = exp(xi) * (t - tau); curves and
# survival depend on the latent age only through it.

def elapsed_latent(xi, tau, times) -> np.ndarray:
    """psi - t0 for aligned arrays (or broadcastable scalars)."""
    return np.exp(xi) * (np.asarray(times, dtype=float) - tau)


def latent_ages(xi, tau, t0: float, times) -> np.ndarray:
    return elapsed_latent(xi, tau, times) + t0


def logistic_from_elapsed(g: float, v0: float, elapsed) -> np.ndarray:
    """gamma0 as a function of psi - t0, exponent clamped to +/-700."""
    arg = clamp_exp_arg(-v0 * (g + 1.0) ** 2 / g * np.asarray(elapsed, dtype=float))
    return 1.0 / (1.0 + g * np.exp(arg))


def logistic_curves(fx: LongitudinalFixed, psi) -> np.ndarray:
    return logistic_from_elapsed(fx.g, fx.v0, np.asarray(psi, dtype=float) - fx.t0)


def log_survival_from_elapsed(nu: float, rho: float, elapsed) -> np.ndarray:
    """log S0; zero where psi <= t0."""
    elapsed = np.asarray(elapsed, dtype=float)
    positive = np.maximum(elapsed, 0.0)
    return np.where(elapsed > 0.0, -((positive / nu) ** rho), 0.0)


def log_hazard_from_elapsed(xi, nu: float, rho: float, elapsed) -> np.ndarray:
    """log h; -inf where psi <= t0 (never NaN)."""
    elapsed = np.asarray(elapsed, dtype=float)
    safe = np.where(elapsed > 0.0, elapsed, 1.0)
    value = math.log(rho) + np.asarray(xi, dtype=float) - math.log(nu) + (rho - 1.0) * np.log(safe / nu)
    return np.where(elapsed > 0.0, value, -np.inf)
