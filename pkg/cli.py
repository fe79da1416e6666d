"""
Command-line interface.

    python cli.py simulate --seed 1 --out data/
    python cli.py fit --data data/ --out model.json --trace trace.csv
    python cli.py personalize --model model.json --data data/ --k-visits 2 --out effects.csv
    python cli.py predict --model model.json --effects effects.csv --data data/ --out preds.csv
    python cli.py report --preds preds.csv --truth data/ --out report.json

Errors are written to stderr as one JSON object; exit code 2 for usage and
schema errors, 1 for runtime failures.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import pandas as pd
from pydantic import ValidationError

from config import config
from evaluation.prediction_benchmark import build_predictions, score_predictions
from jointmodel.errors import DatasetValidationError, InputError, JointModelError
from jointmodel.personalizer import Personalizer
from jointmodel.saem import SaemEstimator, fit_longitudinal
from jointmodel.simulator import simulate_cohort
from models.saem_models import SaemConfig
from models.simulator_models import SimConfig
from storage.dataset_store import Dataset, load_dataset, load_truth, save_dataset
from storage.model_store import (
    load_checkpoint,
    load_effects,
    load_model,
    load_predictions,
    save_checkpoint,
    save_effects,
    save_fit_effects,
    save_model,
    save_predictions,
    save_report,
    save_trace,
)

logger = logging.getLogger(__name__)

EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad command line or configuration."""


class JsonArgumentParser(argparse.ArgumentParser):
    """argparse parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(message)


def _emit_error(kind: str, message: str, details: Optional[list] = None):
    payload = {"error": kind, "message": message, "details": details or []}
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def _read_config_json(path: Optional[str]) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file {p} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {p} is not valid JSON: {e}") from e


def _parse_horizons(text: Optional[str]) -> list[float]:
    if not text:
        return config.get_horizons()
    try:
        horizons = [float(h) for h in text.split(",") if h.strip()]
    except ValueError as e:
        raise UsageError(f"cannot parse horizons {text!r}") from e
    if not horizons or any(h <= 0 for h in horizons):
        raise UsageError("horizons must be positive offsets in years")
    return horizons


# Commands

def cmd_simulate(args) -> int:
    overrides = _read_config_json(args.config)
    if args.n_patients is not None:
        overrides["n_patients"] = args.n_patients
    if args.seed is not None:
        overrides["seed"] = args.seed
    sim_config = SimConfig.real_like(**overrides) if args.preset == "real_like" else SimConfig(**overrides)

    records, truth = simulate_cohort(sim_config)
    dataset = Dataset(records=records, truth=truth)
    out = save_dataset(dataset, config.resolve_output_path(args.out))
    print(json.dumps({"out": str(out), "n_patients": len(records), "n_visits": dataset.n_visits}, sort_keys=True))
    return 0


def _saem_config(args) -> SaemConfig:
    defaults = config.get_saem_defaults()
    if args.schedule == "full":
        # the full schedule keeps its own lengths
        defaults = {k: v for k, v in defaults.items() if k not in ("n_iterations", "n_rm_iterations")}
    settings = {**defaults, **_read_config_json(args.config)}
    if args.seed is not None:
        settings["seed"] = args.seed
    preset = SaemConfig.full_preset if args.schedule == "full" else SaemConfig.desk_preset
    return preset(**settings)


def cmd_fit(args) -> int:
    saem_config = _saem_config(args)
    dataset = load_dataset(args.data)

    init = None
    if saem_config.init == "longitudinal" and not args.resume:
        init = fit_longitudinal(dataset.records, saem_config)
    estimator = SaemEstimator(dataset.records, saem_config, include_survival=True, init=init)
    if args.resume:
        estimator.load_state_dict(load_checkpoint(args.resume))
        logger.info(f"Resumed from {args.resume} at iteration {estimator.iteration}")

    checkpoint = config.resolve_output_path(args.checkpoint) if args.checkpoint else None
    every = args.checkpoint_every if checkpoint else saem_config.n_iterations
    while not estimator.done:
        estimator.run(until=estimator.iteration + every)
        if checkpoint:
            save_checkpoint(estimator.state_dict(), checkpoint)

    fit = estimator.result()
    save_model(fit, config.resolve_output_path(args.out))
    if args.trace:
        save_trace(fit.trace, config.resolve_output_path(args.trace))
    if args.effects:
        save_fit_effects(fit, config.resolve_output_path(args.effects))
    print(json.dumps({"out": str(config.resolve_output_path(args.out)), **fit.params.model_dump()}, sort_keys=True))
    return 0


def cmd_personalize(args) -> int:
    fitted = load_model(args.model)
    dataset = load_dataset(args.data)
    k = args.k_visits
    if k < 1:
        raise UsageError("--k-visits must be >= 1")

    personalizer = Personalizer(fitted, n_threads=args.threads or config.N_THREADS)
    results = personalizer.personalize_many(dataset.records, k_visits=k)
    truncated = {r.id: r.truncated(k) for r in dataset.records}
    save_effects(
        results,
        conditioning_times={pid: r.last_visit_time for pid, r in truncated.items()},
        n_visits_used={pid: len(r.visits) for pid, r in truncated.items()},
        path=config.resolve_output_path(args.out),
    )
    print(json.dumps({"out": str(config.resolve_output_path(args.out)), "n_patients": len(results),
                      "n_not_converged": sum(not r.converged for r in results)}, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    fitted = load_model(args.model)
    effects, conditioning = load_effects(args.effects)
    horizons = _parse_horizons(args.horizons)
    records = load_dataset(args.data).records if args.data else None

    predictions = build_predictions(fitted, effects, conditioning, horizons,
                                    records=records, ibs_points=config.IBS_GRID_POINTS)
    save_predictions(predictions, config.resolve_output_path(args.out))
    print(json.dumps({"out": str(config.resolve_output_path(args.out)), "n_rows": int(len(predictions))},
                     sort_keys=True))
    return 0


def _attach_events(predictions: pd.DataFrame, truth_dir: Path) -> pd.DataFrame:
    """Fill missing event columns from the dataset's events.csv."""
    events_path = truth_dir / "events.csv"
    if not events_path.exists() or predictions["event_time"].notna().all():
        return predictions
    events = pd.read_csv(events_path, dtype={"patient_id": str}, float_precision="round_trip")
    by_id = events.set_index("patient_id")
    missing = predictions["event_time"].isna()
    predictions = predictions.copy()
    predictions.loc[missing, "event_time"] = predictions.loc[missing, "patient_id"].map(by_id["event_time_years"])
    predictions.loc[missing, "event_observed"] = predictions.loc[missing, "patient_id"].map(by_id["observed"])
    return predictions


def cmd_report(args) -> int:
    predictions = load_predictions(args.preds)
    horizons = _parse_horizons(args.horizons)
    truth = None
    if args.truth:
        truth_dir = Path(args.truth)
        truth = load_truth(truth_dir / "ground_truth.csv")
        predictions = _attach_events(predictions, truth_dir)

    report = score_predictions(predictions, horizons, truth=truth,
                               raw_scale_max=config.RAW_SCALE_MAX, ibs_points=config.IBS_GRID_POINTS)
    json_path, csv_path = save_report(report, config.resolve_output_path(args.out))
    print(json.dumps({"out": str(json_path), "table": str(csv_path)}, sort_keys=True))
    return 0


def build_parser() -> JsonArgumentParser:
    common = JsonArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed")
    common.add_argument("--threads", type=int, default=None, help="Worker threads")
    common.add_argument("--verbose", action="store_true", help="DEBUG logging")

    parser = JsonArgumentParser(prog="cli.py", description="Joint latent disease age model")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Simulate a cohort")
    p.add_argument("--config", help="SimConfig JSON")
    p.add_argument("--preset", choices=["simulation", "real_like"], default="simulation")
    p.add_argument("--n-patients", type=int, default=None)
    p.add_argument("--out", required=True, help="Output dataset directory")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("fit", parents=[common], help="Fit the joint model by MCMC-SAEM")
    p.add_argument("--data", required=True, help="Dataset directory")
    p.add_argument("--config", help="SaemConfig JSON")
    p.add_argument("--schedule", choices=["desk", "full"], default="desk",
                   help="desk: 20,000 iterations (or JOINT_SAEM_*); full: 70,000")
    p.add_argument("--out", required=True, help="model.json")
    p.add_argument("--trace", help="Per-iteration trace CSV")
    p.add_argument("--effects", help="Posterior-mean random effects CSV")
    p.add_argument("--checkpoint", help="Checkpoint JSON written during the run")
    p.add_argument("--checkpoint-every", type=int, default=1000)
    p.add_argument("--resume", help="Checkpoint JSON to resume from")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("personalize", parents=[common], help="MAP random effects of new patients")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k-visits", type=int, default=config.PERSONALIZE_K_VISITS)
    p.add_argument("--out", required=True, help="effects.csv")
    p.set_defaults(handler=cmd_personalize)

    p = sub.add_parser("predict", parents=[common], help="Longitudinal and conditional survival predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--effects", required=True)
    p.add_argument("--horizons", default=None, help="Comma separated offsets in years")
    p.add_argument("--data", default=None, help="Dataset with held-out visits and events")
    p.add_argument("--out", required=True, help="preds.csv")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("report", parents=[common], help="Score predictions")
    p.add_argument("--preds", required=True)
    p.add_argument("--truth", default=None, help="Dataset directory with events.csv / ground_truth.csv")
    p.add_argument("--horizons", default=None)
    p.add_argument("--out", required=True, help="report.json")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.DEBUG if args.verbose else config.LOG_LEVEL,
            format=config.LOG_FORMAT,
            stream=sys.stderr,
        )
        problems = config.validate()
        if problems:
            raise UsageError("invalid configuration: " + "; ".join(problems))
        if args.threads is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.handler(args)
    except UsageError as e:
        _emit_error("UsageError", str(e))
        return EXIT_USAGE
    except ValidationError as e:
        _emit_error("ValidationError", "invalid configuration", [err["msg"] for err in e.errors()])
        return EXIT_USAGE
    except DatasetValidationError as e:
        _emit_error("DatasetValidationError", f"{len(e.issues)} issue(s) found", [str(i) for i in e.issues])
        return EXIT_USAGE
    except InputError as e:
        _emit_error(type(e).__name__, str(e))
        return EXIT_USAGE
    except JointModelError as e:
        _emit_error(type(e).__name__, str(e))
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Unexpected failure")
        _emit_error(type(e).__name__, str(e))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
