"""
Pydantic models for recovery and prediction reports.
"""
from typing import Optional

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator


class CoverageRate(BaseModel):
    """Fraction of intervals containing the truth, with an exact 95% CI."""
    model_config = ConfigDict(frozen=True)

    rate: float = Field(ge=0.0, le=1.0)
    ci_low: float = Field(ge=0.0, le=1.0)
    ci_high: float = Field(ge=0.0, le=1.0)
    n_covered: int = Field(ge=0)
    n: int = Field(ge=1)

    @model_validator(mode="after")
    def _ordered(self) -> "CoverageRate":
        if not self.ci_low <= self.rate <= self.ci_high:
            raise ValueError("coverage CI must contain the rate")
        return self


class ParameterRecovery(BaseModel):
    """Recovery metrics of one parameter over M fits (percentages except se)."""
    name: str
    truth: float
    mean_estimate: float
    rb: float
    rrmse: float
    ree: list[float]
    se: Optional[float] = None
    rse: Optional[float] = None
    coverage: Optional[CoverageRate] = None


class RecoveryReport(BaseModel):
    n_datasets: int = Field(ge=1)
    parameters: list[ParameterRecovery]
    icc_tau: Optional[float] = None
    icc_xi: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        """One row per parameter, laid out like a performance-metrics table."""
        rows = []
        for p in self.parameters:
            rows.append({
                "parameter": p.name,
                "truth": p.truth,
                "mean_estimate": p.mean_estimate,
                "rb_pct": p.rb,
                "rrmse_pct": p.rrmse,
                "se_emp": p.se,
                "rse_emp_pct": p.rse,
                "coverage_pct": None if p.coverage is None else 100.0 * p.coverage.rate,
                "coverage_ci_low_pct": None if p.coverage is None else 100.0 * p.coverage.ci_low,
                "coverage_ci_high_pct": None if p.coverage is None else 100.0 * p.coverage.ci_high,
            })
        return pd.DataFrame(rows)


class PredictionReport(BaseModel):
    """Longitudinal errors on the raw scale plus survival discrimination and calibration."""
    n_patients: int = Field(ge=0)
    n_predictions: int = Field(ge=0)
    mae: Optional[float] = None
    mse: Optional[float] = None
    c_index: dict[str, Optional[float]] = Field(default_factory=dict)  # keyed by horizon, e.g. "1.0"
    auc: dict[str, Optional[float]] = Field(default_factory=dict)
    mean_auc: Optional[float] = None
    ibs: Optional[float] = None
    icc_tau: Optional[float] = None
    icc_xi: Optional[float] = None
    notes: list[str] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """metric/value rows, like a prediction-metrics table."""
        rows = [("MAE", self.mae), ("MSE", self.mse)]
        rows += [(f"C-index {h}y", v) for h, v in self.c_index.items()]
        rows += [(f"AUC {h}y", v) for h, v in self.auc.items()]
        rows += [("mean AUC", self.mean_auc), ("IBS", self.ibs)]
        if self.icc_tau is not None:
            rows.append(("ICC tau", self.icc_tau))
        if self.icc_xi is not None:
            rows.append(("ICC xi", self.icc_xi))
        return pd.DataFrame(rows, columns=["metric", "value"])
