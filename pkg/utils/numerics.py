"""
Small numerical helpers shared by the model, likelihood and metrics modules.
"""
import math

import numpy as np

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# exp() overflows past ~709; the logistic argument saturates well before that.
EXP_ARG_LIMIT = 700.0


def gaussian_logpdf(x, mean, std):
    """Gaussian log-density, elementwise. std must already be validated > 0."""
    z = (np.asarray(x, dtype=float) - mean) / std
    return -math.log(std) - LOG_SQRT_2PI - 0.5 * z * z


def clamp_exp_arg(arg):
    """Clamp an exponent argument to the representable range."""
    return np.clip(arg, -EXP_ARG_LIMIT, EXP_ARG_LIMIT)


def all_finite(*values) -> bool:
    """True when every scalar/array argument is finite."""
    return all(bool(np.all(np.isfinite(v))) for v in values)
