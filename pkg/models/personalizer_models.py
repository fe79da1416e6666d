"""
Pydantic models for the Personalizer component.
"""
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator

from models.model_core_models import IndividualEffects, LatentFixedEffects, PopulationParams


class FittedModel(BaseModel):
    """What personalization and prediction need from a fit: theta and the frozen fixed effects."""
    model_config = ConfigDict(frozen=True)

    params: PopulationParams
    latent_fixed: LatentFixedEffects


class PersonalizationResult(BaseModel):
    """MAP random effects for one patient."""
    model_config = ConfigDict(frozen=True)

    patient_id: str = ""
    effects: IndividualEffects
    map_objective: float  # log-posterior at the optimum (higher is better)
    converged: bool
    n_evals: int = Field(ge=0)

    @field_validator("map_objective")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("map_objective must be finite")
        return value
