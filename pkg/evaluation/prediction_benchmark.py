"""
Prediction benchmark: personalize held-out patients on their first visits,
predict their remaining scores and their survival after the last used visit,
and score both.

Run directly for a simulated benchmark:
    python evaluation/prediction_benchmark.py --n-patients 400 --out outputs/benchmark
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd

sys.path.insert(0, str(Path(__file__).parent.parent))

from config import config
from evaluation.metrics import (
    c_index,
    cumulative_dynamic_auc,
    ibs_grid,
    icc,
    integrated_brier,
    mae_mse,
)
from jointmodel.errors import (
    DegenerateConditionError,
    DomainError,
    InestimableWeightsError,
    UndefinedMetricError,
)
from jointmodel.personalizer import Personalizer, predict_conditional_survival, predict_longitudinal
from jointmodel.saem import run_saem
from jointmodel.simulator import simulate_cohort
from models.metrics_models import PredictionReport
from models.model_core_models import IndividualEffects, PatientRecord
from models.personalizer_models import FittedModel
from models.saem_models import SaemConfig
from models.simulator_models import SimConfig
from storage.model_store import save_predictions, save_report
from utils.rng import make_rng

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = [
    "patient_id", "kind", "t_condition", "offset", "time", "prediction", "observed",
    "event_time", "event_observed", "xi", "tau",
]
_OFFSET_ATOL = 1e-9


def survival_offsets(horizons: Sequence[float], ibs_points: int) -> np.ndarray:
    """Requested horizons merged with the IBS grid, sorted and de-duplicated."""
    offsets = np.concatenate([np.asarray(horizons, dtype=float), ibs_grid(max(horizons), ibs_points)])
    offsets = np.sort(offsets)
    keep = np.concatenate([[True], np.diff(offsets) > _OFFSET_ATOL])
    return offsets[keep]


def build_predictions(fitted: FittedModel, effects: dict[str, IndividualEffects],
                      conditioning_times: dict[str, float], horizons: Sequence[float],
                      records: Optional[Sequence[PatientRecord]] = None,
                      ibs_points: int = 30) -> pd.DataFrame:
    """
    Long-format prediction table.

    Survival rows hold S(t_condition + offset) / S(t_condition) for every offset;
    when full records are given, longitudinal rows predict each visit after the
    conditioning time and event columns are filled in.
    """
    offsets = survival_offsets(horizons, ibs_points)
    by_id = {r.id: r for r in records} if records is not None else {}
    rows = []
    for pid, eff in effects.items():
        t_cond = conditioning_times[pid]
        record = by_id.get(pid)
        event_time = record.event_time if record is not None else np.nan
        event_observed = float(record.event_observed) if record is not None else np.nan

        try:
            survival = predict_conditional_survival(eff, fitted, t_cond, t_cond + offsets)
        except DegenerateConditionError as e:
            logger.warning(f"No survival prediction for {pid}: {e}")
            survival = None
        if survival is not None:
            for offset, value in zip(offsets, survival):
                rows.append((pid, "survival", t_cond, offset, t_cond + offset, value, np.nan,
                             event_time, event_observed, eff.xi, eff.tau))

        if record is not None:
            future = record.times > t_cond
            if np.any(future):
                times = record.times[future]
                predicted = predict_longitudinal(eff, fitted, times)
                for t, p, y in zip(times, predicted, record.values[future]):
                    rows.append((pid, "longitudinal", t_cond, t - t_cond, t, p, y,
                                 event_time, event_observed, eff.xi, eff.tau))
    return pd.DataFrame(rows, columns=PREDICTION_COLUMNS)


def _column_for(offsets: np.ndarray, value: float) -> Optional[int]:
    hits = np.flatnonzero(np.isclose(offsets, value, rtol=0.0, atol=_OFFSET_ATOL))
    return int(hits[0]) if hits.size else None


def score_predictions(predictions: pd.DataFrame, horizons: Sequence[float],
                      truth: Optional[dict[str, IndividualEffects]] = None,
                      raw_scale_max: float = 48.0, ibs_points: int = 30) -> PredictionReport:
    """Score a prediction table; metrics that are undefined on the data are left empty with a note."""
    notes: list[str] = []
    horizons = [float(h) for h in horizons]
    report = {"n_patients": int(predictions["patient_id"].nunique()), "n_predictions": 0}

    longitudinal = predictions[(predictions["kind"] == "longitudinal") & predictions["observed"].notna()]
    report["n_predictions"] = int(len(longitudinal))
    if len(longitudinal):
        report["mae"], report["mse"] = mae_mse(
            longitudinal["prediction"].to_numpy(), longitudinal["observed"].to_numpy(), raw_scale_max)
    else:
        notes.append("no held-out visits: MAE/MSE not computed")

    survival = predictions[predictions["kind"] == "survival"]
    wide = survival.pivot_table(index="patient_id", columns="offset", values="prediction", sort=True)
    patients = survival.groupby("patient_id")[["t_condition", "event_time", "event_observed"]].first()
    patients = patients.loc[wide.index]
    durations = (patients["event_time"] - patients["t_condition"]).to_numpy(dtype=float)
    flags = patients["event_observed"].to_numpy(dtype=float)
    usable = np.isfinite(durations) & np.isfinite(flags) & (durations > 0)
    if np.any(~usable):
        notes.append(f"{int(np.count_nonzero(~usable))} patient(s) without a usable event time after conditioning")

    offsets = wide.columns.to_numpy(dtype=float)
    surv = wide.to_numpy(dtype=float)[usable]
    durations, flags = durations[usable], flags[usable].astype(bool)

    c_values, auc_values = {}, {}
    horizon_cols = [_column_for(offsets, h) for h in horizons]
    for h, col in zip(horizons, horizon_cols):
        key = f"{h:g}"
        c_values[key] = None
        if col is None or surv.shape[0] == 0:
            notes.append(f"no survival predictions at horizon {key}")
            continue
        try:
            c_values[key] = c_index(1.0 - surv[:, col], durations, flags, h)
        except UndefinedMetricError as e:
            notes.append(str(e))

    report["c_index"] = c_values
    if surv.shape[0] and all(col is not None for col in horizon_cols):
        for h in horizons:
            auc_values[f"{h:g}"] = None
        try:
            mean_auc, aucs = cumulative_dynamic_auc(surv[:, horizon_cols], durations, flags, horizons)
            report["mean_auc"] = mean_auc
            auc_values = {f"{h:g}": a for h, a in zip(horizons, aucs)}
        except (UndefinedMetricError, InestimableWeightsError) as e:
            notes.append(f"AUC: {e}")
    report["auc"] = auc_values

    grid = ibs_grid(max(horizons), ibs_points)
    grid_cols = [_column_for(offsets, t) for t in grid]
    if surv.shape[0] and all(col is not None for col in grid_cols):
        try:
            report["ibs"] = integrated_brier(surv[:, grid_cols], durations, flags, grid)
        except InestimableWeightsError as e:
            notes.append(f"IBS: {e}")

    if truth:
        first = predictions.groupby("patient_id")[["xi", "tau"]].first()
        ids = [pid for pid in first.index if pid in truth]
        if len(ids) >= 2:
            try:
                report["icc_tau"] = icc(first.loc[ids, "tau"].to_numpy(), [truth[p].tau for p in ids])
                report["icc_xi"] = icc(first.loc[ids, "xi"].to_numpy(), [truth[p].xi for p in ids])
            except DomainError as e:
                notes.append(f"ICC: {e}")

    return PredictionReport(**report, notes=notes)


def split_patients(records: Sequence[PatientRecord], test_fraction: float, seed: int):
    """Seeded train/test split of patients."""
    order = make_rng(seed).permutation(len(records))
    n_test = max(1, int(round(test_fraction * len(records))))
    test_idx = set(order[:n_test].tolist())
    train = [r for i, r in enumerate(records) if i not in test_idx]
    test = [r for i, r in enumerate(records) if i in test_idx]
    return train, test


def run_benchmark(sim_config: SimConfig, saem_config: SaemConfig, k_visits: int = 2,
                  test_fraction: float = 0.2, horizons: Sequence[float] = (1.0, 1.5),
                  ibs_points: int = 30, n_threads: int = 1) -> tuple[PredictionReport, pd.DataFrame]:
    """Simulate, fit on the training patients, personalize and predict the held-out ones."""
    records, truth = simulate_cohort(sim_config)
    train, test = split_patients(records, test_fraction, sim_config.seed)
    logger.info(f"Benchmark split: {len(train)} training / {len(test)} held-out patients")

    fit = run_saem(train, saem_config)
    fitted = FittedModel(params=fit.params, latent_fixed=fit.latent_fixed)

    personalizer = Personalizer(fitted, n_threads=n_threads)
    results = personalizer.personalize_many(test, k_visits=k_visits)
    effects = {r.patient_id: r.effects for r in results}
    conditioning = {r.id: r.truncated(k_visits).last_visit_time for r in test}

    predictions = build_predictions(fitted, effects, conditioning, horizons, records=test, ibs_points=ibs_points)
    report = score_predictions(predictions, horizons, truth=truth,
                               raw_scale_max=config.RAW_SCALE_MAX, ibs_points=ibs_points)
    return report, predictions


def main():
    parser = argparse.ArgumentParser(description="Simulated prediction benchmark")
    parser.add_argument("--n-patients", type=int, default=400)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--n-iterations", type=int, default=config.SAEM_ITERATIONS)
    parser.add_argument("--n-rm-iterations", type=int, default=config.SAEM_RM_ITERATIONS)
    parser.add_argument("--k-visits", type=int, default=config.PERSONALIZE_K_VISITS)
    parser.add_argument("--test-fraction", type=float, default=0.2)
    parser.add_argument("--threads", type=int, default=config.N_THREADS)
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    args = parser.parse_args()

    logging.basicConfig(level=config.LOG_LEVEL, format=config.LOG_FORMAT)

    out_dir = Path(args.out) if args.out else config.ensure_output_dir() / "benchmark"
    out_dir.mkdir(parents=True, exist_ok=True)

    sim_config = SimConfig(n_patients=args.n_patients, seed=args.seed)
    saem_config = SaemConfig(
        n_iterations=args.n_iterations,
        n_rm_iterations=args.n_rm_iterations,
        seed=args.seed,
    )
    prediction_config = config.get_prediction_config()
    report, predictions = run_benchmark(
        sim_config, saem_config,
        k_visits=args.k_visits,
        test_fraction=args.test_fraction,
        horizons=prediction_config["horizons"],
        ibs_points=prediction_config["ibs_grid_points"],
        n_threads=args.threads,
    )

    save_predictions(predictions, out_dir / "preds.csv")
    save_report(report, out_dir / "report.json")

    logger.info(f"{'='*60}")
    logger.info("PREDICTION BENCHMARK")
    logger.info(f"{'='*60}")
    for row in report.to_frame().itertuples(index=False):
        value = "n/a" if row.value is None or pd.isna(row.value) else f"{row.value:.4f}"
        logger.info(f"  {row.metric:<14} {value}")
    for note in report.notes:
        logger.info(f"  note: {note}")
    logger.info(f"Results saved to {out_dir}")


if __name__ == "__main__":
    main()
