"""
End-to-end test of the command-line pipeline:
simulate -> fit -> personalize -> predict -> report, on a small cohort with a
short SAEM schedule.
"""
import argparse
import json
import sys
from pathlib import Path

import pandas as pd
import pytest

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from cli import EXIT_USAGE, _saem_config, main

SHORT_SCHEDULE = {"n_iterations": 60, "n_rm_iterations": 20, "adaptation_window": 10, "init": "moment"}


def run(argv, capsys) -> tuple[int, str, str]:
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_full_pipeline(tmp_path, capsys):
    data = tmp_path / "data"
    schedule = tmp_path / "saem.json"
    schedule.write_text(json.dumps(SHORT_SCHEDULE))

    code, out, _ = run(["simulate", "--seed", 1, "--n-patients", 40, "--out", data], capsys)
    assert code == 0
    assert json.loads(out)["n_patients"] == 40
    for name in ("longitudinal.csv", "events.csv", "ground_truth.csv"):
        assert (data / name).exists()

    code, out, _ = run(["fit", "--data", data, "--config", schedule, "--seed", 3,
                        "--out", tmp_path / "model.json", "--trace", tmp_path / "trace.csv",
                        "--effects", tmp_path / "fit_effects.csv"], capsys)
    assert code == 0
    model = json.loads((tmp_path / "model.json").read_text())
    assert model["format_version"] == 1
    assert set(model["params"]) >= {"sigma", "t0", "sigma_tau", "sigma_xi"}
    assert len(pd.read_csv(tmp_path / "trace.csv")) == 60

    code, _, _ = run(["personalize", "--model", tmp_path / "model.json", "--data", data,
                      "--k-visits", 2, "--out", tmp_path / "effects.csv"], capsys)
    assert code == 0
    effects = pd.read_csv(tmp_path / "effects.csv", dtype={"patient_id": str})
    assert len(effects) == 40
    assert (effects["n_visits_used"] <= 2).all()

    code, _, _ = run(["predict", "--model", tmp_path / "model.json", "--effects", tmp_path / "effects.csv",
                      "--data", data, "--horizons", "1.0,1.5", "--out", tmp_path / "preds.csv"], capsys)
    assert code == 0
    preds = pd.read_csv(tmp_path / "preds.csv", dtype={"patient_id": str})
    survival = preds[preds["kind"] == "survival"]
    assert survival["prediction"].between(0.0, 1.0).all()
    assert set(preds["kind"]) <= {"survival", "longitudinal"}

    code, _, _ = run(["report", "--preds", tmp_path / "preds.csv", "--truth", data,
                      "--horizons", "1.0,1.5", "--out", tmp_path / "report.json"], capsys)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n_patients"] == 40
    assert set(report["c_index"]) == {"1", "1.5"}
    assert (tmp_path / "report.csv").exists()


def test_fit_is_reproducible(tmp_path, capsys):
    data = tmp_path / "data"
    schedule = tmp_path / "saem.json"
    schedule.write_text(json.dumps(SHORT_SCHEDULE))
    assert run(["simulate", "--seed", 2, "--n-patients", 25, "--out", data], capsys)[0] == 0

    for name in ("a", "b"):
        code, _, _ = run(["fit", "--data", data, "--config", schedule, "--seed", 9,
                          "--out", tmp_path / f"{name}.json", "--trace", tmp_path / f"{name}.csv"], capsys)
        assert code == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_fit_resumes_from_checkpoint(tmp_path, capsys):
    data = tmp_path / "data"
    schedule = tmp_path / "saem.json"
    schedule.write_text(json.dumps(SHORT_SCHEDULE))
    assert run(["simulate", "--seed", 4, "--n-patients", 20, "--out", data], capsys)[0] == 0

    common = ["fit", "--data", data, "--config", schedule, "--seed", 5]
    assert run([*common, "--out", tmp_path / "full.json", "--checkpoint", tmp_path / "ckpt.json",
                "--checkpoint-every", 25], capsys)[0] == 0
    checkpoint = json.loads((tmp_path / "ckpt.json").read_text())
    assert checkpoint["iteration"] == 60

    assert run([*common, "--out", tmp_path / "resumed.json", "--resume", tmp_path / "ckpt.json"], capsys)[0] == 0
    assert (tmp_path / "full.json").read_bytes() == (tmp_path / "resumed.json").read_bytes()


def test_usage_errors_are_json(tmp_path, capsys):
    code, _, err = run(["fit", "--out", tmp_path / "model.json"], capsys)
    assert code == EXIT_USAGE
    assert json.loads(err.strip().splitlines()[-1])["error"] == "UsageError"

    code, _, err = run(["personalize", "--model", tmp_path / "m.json", "--data", tmp_path,
                        "--k-visits", 0, "--out", tmp_path / "e.csv"], capsys)
    assert code != 0


def test_invalid_dataset_exit_code(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code, _, err = run(["fit", "--data", tmp_path / "empty", "--out", tmp_path / "model.json"], capsys)
    assert code == EXIT_USAGE
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "DatasetValidationError"
    assert payload["details"]


def test_invalid_schedule_exit_code(tmp_path, capsys):
    schedule = tmp_path / "saem.json"
    schedule.write_text(json.dumps({"n_iterations": 10, "n_rm_iterations": 10}))
    data = tmp_path / "data"
    assert run(["simulate", "--seed", 1, "--n-patients", 5, "--out", data], capsys)[0] == 0
    code, _, err = run(["fit", "--data", data, "--config", schedule, "--out", tmp_path / "m.json"], capsys)
    assert code == EXIT_USAGE
    assert json.loads(err.strip().splitlines()[-1])["error"] == "ValidationError"


def test_schedule_presets():
    full = _saem_config(argparse.Namespace(schedule="full", config=None, seed=4))
    assert (full.n_iterations, full.n_rm_iterations, full.seed) == (70_000, 10_000, 4)
    desk = _saem_config(argparse.Namespace(schedule="desk", config=None, seed=None))
    assert desk.n_rm_iterations < desk.n_iterations


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
