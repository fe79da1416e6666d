"""
Seed handling. Every stochastic component derives its numpy Generator here so
runs are reproducible from a single integer seed.
"""
import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Generator for a sequential stochastic process (e.g. one SAEM chain)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def patient_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one patient, independent of generation order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))
