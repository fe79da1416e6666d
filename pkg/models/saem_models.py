"""
Models for the MCMC-SAEM estimator.
"""
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.model_core_models import (
    Hyperparams,
    IndividualEffects,
    LatentFixedEffects,
    LatentState,
    PopulationParams,
)


class ProposalStds(BaseModel):
    """Initial random-walk scales of each Metropolis block."""
    model_config = ConfigDict(frozen=True)

    xi: float = Field(default=0.1, gt=0.0)
    tau: float = Field(default=0.5, gt=0.0)
    g_tilde: float = Field(default=0.005, gt=0.0)
    v0_tilde: float = Field(default=0.005, gt=0.0)
    nu_tilde: float = Field(default=0.005, gt=0.0)
    rho_tilde: float = Field(default=0.005, gt=0.0)


class SaemConfig(BaseModel):
    """Schedule, sampler and initialization settings for one SAEM run."""
    model_config = ConfigDict(frozen=True)

    n_iterations: int = Field(default=70_000, ge=2)
    n_rm_iterations: int = Field(default=10_000, ge=1)
    burn_in_fraction: float = Field(default=0.6, ge=0.0, le=1.0)
    step_exponent: float = Field(default=0.9, gt=0.5, le=1.0)
    proposal_stds: ProposalStds = Field(default_factory=ProposalStds)
    target_acceptance: float = Field(default=0.3, gt=0.0, lt=1.0)
    adaptation_window: int = Field(default=50, ge=1)
    stall_threshold: float = Field(default=0.01, ge=0.0, lt=1.0)
    seed: int = 0
    variance_floor: float = Field(default=1e-9, gt=0.0)
    feasibility_margin: float = Field(default=0.01, gt=0.0)
    hyperparams: Hyperparams = Field(default_factory=Hyperparams)
    init: Literal["moment", "longitudinal"] = "moment"
    prefit_iterations: int = Field(default=2_000, ge=2)
    initial_sigma_xi: float = Field(default=0.5, gt=0.0)
    log_every: int = Field(default=0, ge=0)  # 0: every 10% of the run

    @model_validator(mode="after")
    def _check_schedule(self) -> "SaemConfig":
        if self.n_rm_iterations >= self.n_iterations:
            raise ValueError("n_rm_iterations must be smaller than n_iterations")
        return self

    @property
    def n_pre_rm(self) -> int:
        return self.n_iterations - self.n_rm_iterations

    @property
    def n_burn_in(self) -> int:
        return int(round(self.burn_in_fraction * self.n_pre_rm))

    @classmethod
    def full_preset(cls, **overrides) -> "SaemConfig":
        """70,000 iterations with a 10,000 iteration averaging window."""
        return cls(**{"n_iterations": 70_000, "n_rm_iterations": 10_000, **overrides})

    @classmethod
    def desk_preset(cls, **overrides) -> "SaemConfig":
        """20,000 iterations with a 4,000 iteration averaging window."""
        return cls(**{"n_iterations": 20_000, "n_rm_iterations": 4_000, **overrides})


@dataclass
class PosteriorWindow:
    """Running sums of the draws seen during the averaging window."""
    theta_sum: np.ndarray  # (8,) in PARAM_NAMES order
    xi_sum: np.ndarray  # (N,)
    tau_sum: np.ndarray  # (N,)
    fixed_sum: np.ndarray  # (4,) in FIXED_BLOCKS order
    count: int = 0

    @property
    def size(self) -> int:
        return self.count

    @classmethod
    def empty(cls, n_patients: int) -> "PosteriorWindow":
        return cls(
            theta_sum=np.zeros(8),
            xi_sum=np.zeros(n_patients),
            tau_sum=np.zeros(n_patients),
            fixed_sum=np.zeros(4),
        )

    def add(self, theta: np.ndarray, xi: np.ndarray, tau: np.ndarray, fixed: np.ndarray):
        self.theta_sum += theta
        self.xi_sum += xi
        self.tau_sum += tau
        self.fixed_sum += fixed
        self.count += 1

    def means(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n = float(self.count)
        return self.theta_sum / n, self.xi_sum / n, self.tau_sum / n, self.fixed_sum / n

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "theta_sum": self.theta_sum.tolist(),
            "xi_sum": self.xi_sum.tolist(),
            "tau_sum": self.tau_sum.tolist(),
            "fixed_sum": self.fixed_sum.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PosteriorWindow":
        return cls(
            theta_sum=np.array(data["theta_sum"], dtype=float),
            xi_sum=np.array(data["xi_sum"], dtype=float),
            tau_sum=np.array(data["tau_sum"], dtype=float),
            fixed_sum=np.array(data["fixed_sum"], dtype=float),
            count=int(data["count"]),
        )


@dataclass
class FitResult:
    """Complete result of one SAEM fit."""
    params: PopulationParams
    individual_effects: dict[str, IndividualEffects]
    latent_fixed: LatentFixedEffects
    trace: pd.DataFrame
    diagnostics: dict[str, float]
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    final_state: Optional[LatentState] = None
    include_survival: bool = True
