"""
Models for the likelihood component: log-likelihood terms, sufficient
statistics and the raw maximization output.
"""
from dataclasses import dataclass, fields

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class LogLikTerms(BaseModel):
    """The four parts of the complete-data log-likelihood and their sum."""
    model_config = ConfigDict(frozen=True)

    longitudinal_attach: float
    survival_attach: float
    random_effects_prior: float
    fixed_effects_prior: float
    total: float

    @classmethod
    def from_terms(cls, longitudinal: float, survival: float, random_effects: float, fixed_effects: float) -> "LogLikTerms":
        return cls(
            longitudinal_attach=longitudinal,
            survival_attach=survival,
            random_effects_prior=random_effects,
            fixed_effects_prior=fixed_effects,
            total=longitudinal + survival + random_effects + fixed_effects,
        )


class DataCounts(BaseModel):
    """Number of patients N and total number of visits (sum of n_i)."""
    model_config = ConfigDict(frozen=True)

    n_patients: int = Field(ge=0)
    n_visits: int = Field(ge=0)


class RawMaximization(BaseModel):
    """Closed-form maximizers before the identifiability overwrite."""
    model_config = ConfigDict(frozen=True)

    sigma2: float
    mean_g_tilde: float
    mean_v0_tilde: float
    mean_nu_tilde: float
    mean_rho_tilde: float
    tau_mean: float
    sigma2_tau: float
    xi_mean: float
    sigma2_xi: float


@dataclass
class SufficientStats:
    """
    S1..S16. Per-visit vectors (s1: y^2, s2: y*gamma, s3: gamma^2), per-patient
    survival terms s4, scalar latent fixed effects and squares s5..s12, and
    per-patient tau^2, tau, xi^2, xi vectors s13..s16.
    """
    s1: np.ndarray
    s2: np.ndarray
    s3: np.ndarray
    s4: np.ndarray
    s5: float
    s6: float
    s7: float
    s8: float
    s9: float
    s10: float
    s11: float
    s12: float
    s13: np.ndarray
    s14: np.ndarray
    s15: np.ndarray
    s16: np.ndarray

    @property
    def n_patients(self) -> int:
        return int(self.s13.shape[0])

    @property
    def n_visits(self) -> int:
        return int(self.s1.shape[0])

    def counts(self) -> DataCounts:
        return DataCounts(n_patients=self.n_patients, n_visits=self.n_visits)

    def blend(self, new: "SufficientStats", step: float) -> "SufficientStats":
        """Stochastic approximation: self + step * (new - self). Exact for step 0 and 1."""
        if step == 1.0:
            return new.copy()
        if step == 0.0:
            return self.copy()
        values = {}
        for f in fields(self):
            old_value = getattr(self, f.name)
            new_value = getattr(new, f.name)
            values[f.name] = old_value + step * (new_value - old_value)
        return SufficientStats(**values)

    def copy(self) -> "SufficientStats":
        return SufficientStats(**{
            f.name: (getattr(self, f.name).copy() if isinstance(getattr(self, f.name), np.ndarray)
                     else getattr(self, f.name))
            for f in fields(self)
        })

    def to_dict(self) -> dict:
        return {
            f.name: (getattr(self, f.name).tolist() if isinstance(getattr(self, f.name), np.ndarray)
                     else float(getattr(self, f.name)))
            for f in fields(self)
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SufficientStats":
        vectors = {"s1", "s2", "s3", "s4", "s13", "s14", "s15", "s16"}
        return cls(**{
            name: (np.array(value, dtype=float) if name in vectors else float(value))
            for name, value in data.items()
        })
