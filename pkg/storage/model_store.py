"""
JSON and CSV artifacts: fitted models, traces, personalized effects,
predictions, reports and SAEM checkpoints.

JSON floats use Python's shortest round-trip repr; CSV floats use 17
significant digits. Both read back bitwise.
"""
import json
import logging
from pathlib import Path
from typing import Union

import pandas as pd
from pydantic import BaseModel

from jointmodel.errors import InputError
from models.model_core_models import IndividualEffects, LatentFixedEffects, PopulationParams
from models.personalizer_models import FittedModel, PersonalizationResult
from models.saem_models import FitResult
from storage.dataset_store import FLOAT_FORMAT

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
EFFECTS_COLUMNS = ["patient_id", "xi", "tau", "t_condition", "n_visits_used", "map_objective", "converged", "n_evals"]


def _write_json(data: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return path


def _read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e


def _write_csv(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def _read_csv(path, required: list[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path} does not exist")
    frame = pd.read_csv(path, dtype={"patient_id": str}, float_precision="round_trip")
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise InputError(f"{path.name} lacks columns {missing}")
    return frame


# Fitted model

def save_model(fit: Union[FitResult, FittedModel], path) -> Path:
    """
    Write model.json.

    Args:
        fit: A full FitResult or just the fitted parameters
        path: Output file

    Returns:
        The written path
    """
    data = {
        "format_version": MODEL_FORMAT_VERSION,
        "params": fit.params.model_dump(),
        "latent_fixed": fit.latent_fixed.model_dump(),
    }
    if isinstance(fit, FitResult):
        data["hyperparams"] = fit.hyperparams.model_dump()
        data["diagnostics"] = dict(fit.diagnostics)
        data["include_survival"] = fit.include_survival
        data["n_iterations"] = int(len(fit.trace))
    path = _write_json(data, path)
    logger.info(f"Saved model to {path}")
    return path


def load_model(path) -> FittedModel:
    data = _read_json(path)
    if data.get("format_version") != MODEL_FORMAT_VERSION:
        raise InputError(f"{path}: unsupported model format {data.get('format_version')!r}")
    return FittedModel(
        params=PopulationParams(**data["params"]),
        latent_fixed=LatentFixedEffects(**data["latent_fixed"]),
    )


def save_trace(trace: pd.DataFrame, path) -> Path:
    return _write_csv(trace, path)


def load_trace(path) -> pd.DataFrame:
    return _read_csv(path, ["iteration", "loglik"])


def save_fit_effects(fit: FitResult, path) -> Path:
    """Posterior-mean random effects of the fitted cohort."""
    frame = pd.DataFrame(
        [(pid, e.xi, e.tau) for pid, e in fit.individual_effects.items()],
        columns=["patient_id", "xi", "tau"],
    )
    return _write_csv(frame, path)


# Personalized effects

def save_effects(results: list[PersonalizationResult], conditioning_times: dict[str, float],
                 n_visits_used: dict[str, int], path) -> Path:
    """
    Write effects.csv for personalized patients.

    Args:
        results: One PersonalizationResult per patient
        conditioning_times: Last visit time used for each patient
        n_visits_used: Number of visits used for each patient
        path: Output file
    """
    frame = pd.DataFrame(
        [
            (r.patient_id, r.effects.xi, r.effects.tau, conditioning_times[r.patient_id],
             n_visits_used[r.patient_id], r.map_objective, int(r.converged), r.n_evals)
            for r in results
        ],
        columns=EFFECTS_COLUMNS,
    )
    return _write_csv(frame, path)


def load_effects(path) -> tuple[dict[str, IndividualEffects], dict[str, float]]:
    """Effects and conditioning times keyed by patient id, in file order."""
    frame = _read_csv(path, ["patient_id", "xi", "tau", "t_condition"])
    effects, conditioning = {}, {}
    for row in frame.itertuples(index=False):
        effects[row.patient_id] = IndividualEffects(xi=float(row.xi), tau=float(row.tau))
        conditioning[row.patient_id] = float(row.t_condition)
    return effects, conditioning


# Predictions and reports

def save_predictions(predictions: pd.DataFrame, path) -> Path:
    return _write_csv(predictions, path)


def load_predictions(path) -> pd.DataFrame:
    return _read_csv(path, ["patient_id", "kind", "t_condition", "offset", "prediction"])


def save_report(report: BaseModel, path) -> tuple[Path, Path]:
    """report.json plus a sibling CSV table."""
    json_path = _write_json(report.model_dump(mode="json"), path)
    csv_path = _write_csv(report.to_frame(), Path(path).with_suffix(".csv"))
    logger.info(f"Saved report to {json_path} and {csv_path}")
    return json_path, csv_path


# Checkpoints

def save_checkpoint(state: dict, path) -> Path:
    path = _write_json(state, path)
    logger.info(f"Checkpoint written to {path} at iteration {state.get('iteration')}")
    return path


def load_checkpoint(path) -> dict:
    return _read_json(path)
