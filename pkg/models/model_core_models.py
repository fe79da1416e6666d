"""
Pydantic models and numeric containers for the model core.
"""
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class IndividualEffects(BaseModel):
    """Per-patient random effects."""
    model_config = ConfigDict(frozen=True)

    xi: float  # log-rate factor
    tau: float  # time shift (years)

    @field_validator("xi", "tau")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("random effects must be finite")
        return value


class LongitudinalFixed(BaseModel):
    """Logistic curve parameters."""
    model_config = ConfigDict(frozen=True)

    g: float = Field(gt=0.0)
    v0: float = Field(gt=0.0)
    t0: float

    @field_validator("t0")
    @classmethod
    def _finite_t0(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("t0 must be finite")
        return value


class SurvivalFixed(BaseModel):
    """Weibull parameters on the latent disease age axis."""
    model_config = ConfigDict(frozen=True)

    nu: float = Field(gt=0.0)  # scale (years)
    rho: float = Field(gt=0.0)  # shape


class LatentFixedEffects(BaseModel):
    """Sampled fixed effects, on their unconstrained scale."""
    model_config = ConfigDict(frozen=True)

    g_tilde: float
    v0_tilde: float
    nu_tilde: float
    rho_tilde: float

    @classmethod
    def from_natural(cls, longitudinal: LongitudinalFixed, survival: SurvivalFixed) -> "LatentFixedEffects":
        return cls(
            g_tilde=math.log(longitudinal.g),
            v0_tilde=math.log(longitudinal.v0),
            nu_tilde=-math.log(survival.nu),
            rho_tilde=math.log(survival.rho),
        )

    def longitudinal(self, t0: float) -> LongitudinalFixed:
        return LongitudinalFixed(g=math.exp(self.g_tilde), v0=math.exp(self.v0_tilde), t0=t0)

    def survival(self) -> SurvivalFixed:
        return SurvivalFixed(nu=math.exp(-self.nu_tilde), rho=math.exp(self.rho_tilde))

    def as_array(self) -> np.ndarray:
        return np.array([self.g_tilde, self.v0_tilde, self.nu_tilde, self.rho_tilde])


LATENT_FIXED_NAMES = ("g_tilde", "v0_tilde", "nu_tilde", "rho_tilde")


class PopulationParams(BaseModel):
    """Model parameters theta. The mean log-rate is fixed at 0 and t0 is the mean time shift."""
    model_config = ConfigDict(frozen=True)

    sigma_tau: float = Field(gt=0.0)
    sigma_xi: float = Field(gt=0.0)
    t0: float
    mean_g_tilde: float
    mean_v0_tilde: float
    mean_nu_tilde: float
    mean_rho_tilde: float
    sigma: float = Field(gt=0.0)

    @property
    def g(self) -> float:
        return math.exp(self.mean_g_tilde)

    @property
    def v0(self) -> float:
        return math.exp(self.mean_v0_tilde)

    @property
    def nu(self) -> float:
        return math.exp(-self.mean_nu_tilde)

    @property
    def rho(self) -> float:
        return math.exp(self.mean_rho_tilde)

    def latent_means(self) -> LatentFixedEffects:
        return LatentFixedEffects(
            g_tilde=self.mean_g_tilde,
            v0_tilde=self.mean_v0_tilde,
            nu_tilde=self.mean_nu_tilde,
            rho_tilde=self.mean_rho_tilde,
        )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES])

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "PopulationParams":
        return cls(**{name: float(v) for name, v in zip(PARAM_NAMES, values)})


PARAM_NAMES = (
    "sigma_tau", "sigma_xi", "t0",
    "mean_g_tilde", "mean_v0_tilde", "mean_nu_tilde", "mean_rho_tilde",
    "sigma",
)


class Hyperparams(BaseModel):
    """User-set prior standard deviations of the latent fixed effects."""
    model_config = ConfigDict(frozen=True)

    sigma_g_tilde: float = Field(default=0.01, gt=0.0)
    sigma_v0_tilde: float = Field(default=0.01, gt=0.0)
    sigma_nu_tilde: float = Field(default=0.01, gt=0.0)
    sigma_rho_tilde: float = Field(default=0.01, gt=0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma_g_tilde, self.sigma_v0_tilde, self.sigma_nu_tilde, self.sigma_rho_tilde])


class Visit(BaseModel):
    """One observation of the normalized score."""
    model_config = ConfigDict(frozen=True)

    time: float
    value: float = Field(ge=0.0, le=1.0)


class PatientRecord(BaseModel):
    """Visits plus the event time and its observed flag."""
    model_config = ConfigDict(frozen=True)

    id: str
    visits: list[Visit] = Field(min_length=1)
    event_time: float
    event_observed: bool

    @model_validator(mode="after")
    def _check_ordering(self) -> "PatientRecord":
        times = [v.time for v in self.visits]
        if not all(math.isfinite(t) for t in times) or not math.isfinite(self.event_time):
            raise ValueError(f"patient {self.id}: times must be finite")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"patient {self.id}: visit times must be strictly increasing")
        if self.event_time < times[0]:
            raise ValueError(f"patient {self.id}: event time precedes the first visit")
        return self

    @property
    def times(self) -> np.ndarray:
        return np.array([v.time for v in self.visits])

    @property
    def values(self) -> np.ndarray:
        return np.array([v.value for v in self.visits])

    @property
    def last_visit_time(self) -> float:
        return self.visits[-1].time

    def truncated(self, k: int) -> "PatientRecord":
        """First k visits, event treated as censored at the last kept visit."""
        kept = self.visits[:k]
        return PatientRecord(id=self.id, visits=kept, event_time=kept[-1].time, event_observed=False)


@dataclass
class LatentState:
    """Current value of every latent variable z = (z_re, z_fe)."""
    xi: np.ndarray
    tau: np.ndarray
    g_tilde: float
    v0_tilde: float
    nu_tilde: float
    rho_tilde: float

    @property
    def g(self) -> float:
        return math.exp(self.g_tilde)

    @property
    def v0(self) -> float:
        return math.exp(self.v0_tilde)

    @property
    def nu(self) -> float:
        return math.exp(-self.nu_tilde)

    @property
    def rho(self) -> float:
        return math.exp(self.rho_tilde)

    def copy(self) -> "LatentState":
        return LatentState(
            xi=self.xi.copy(), tau=self.tau.copy(),
            g_tilde=self.g_tilde, v0_tilde=self.v0_tilde,
            nu_tilde=self.nu_tilde, rho_tilde=self.rho_tilde,
        )

    def latent_fixed(self) -> LatentFixedEffects:
        return LatentFixedEffects(
            g_tilde=self.g_tilde, v0_tilde=self.v0_tilde,
            nu_tilde=self.nu_tilde, rho_tilde=self.rho_tilde,
        )

    def fixed_array(self) -> np.ndarray:
        return np.array([self.g_tilde, self.v0_tilde, self.nu_tilde, self.rho_tilde])

    def with_fixed(self, name: str, value: float) -> "LatentState":
        state = self.copy()
        setattr(state, name, float(value))
        return state


@dataclass
class CohortArrays:
    """Flattened view of a list of PatientRecord for vectorized evaluation."""
    patient_ids: list[str]
    times: np.ndarray
    values: np.ndarray
    patient_index: np.ndarray
    n_visits: np.ndarray
    event_times: np.ndarray
    event_observed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def n_patients(self) -> int:
        return len(self.patient_ids)

    @property
    def total_visits(self) -> int:
        return int(self.times.shape[0])

    @classmethod
    def from_records(cls, records: Sequence[PatientRecord]) -> "CohortArrays":
        times, values, index = [], [], []
        for i, record in enumerate(records):
            for visit in record.visits:
                times.append(visit.time)
                values.append(visit.value)
                index.append(i)
        return cls(
            patient_ids=[r.id for r in records],
            times=np.array(times, dtype=float),
            values=np.array(values, dtype=float),
            patient_index=np.array(index, dtype=np.int64),
            n_visits=np.array([len(r.visits) for r in records], dtype=np.int64),
            event_times=np.array([r.event_time for r in records], dtype=float),
            event_observed=np.array([r.event_observed for r in records], dtype=bool),
        )


def as_cohort(data) -> CohortArrays:
    """Accept either prepared CohortArrays or a sequence of PatientRecord."""
    if isinstance(data, CohortArrays):
        return data
    return CohortArrays.from_records(list(data))
