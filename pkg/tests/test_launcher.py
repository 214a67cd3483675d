import json

import pandas as pd
import pytest

import experiments.training as training
import launcher
from config import RESOLVED_CONFIG_NAME


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    """A smoke cohort with fold 0 trained through the command line."""
    run = tmp_path_factory.mktemp("cli") / "run"
    assert launcher.main(["generate", "--preset", "smoke", "--output-dir", str(run)]) == launcher.EXIT_OK
    assert launcher.main(["train", "--preset", "smoke", "--output-dir", str(run), "--folds", "0"]) == launcher.EXIT_OK
    return run


def test_generate_writes_cohort(trained_run):
    data = trained_run / "data"
    manifest = pd.read_csv(data / "manifest.csv")
    assert len(manifest) == 30
    assert (data / "age_histogram.png").exists()
    assert (data / RESOLVED_CONFIG_NAME).exists()


def test_train_writes_checkpoints_and_curves(trained_run):
    assert (trained_run / "fold_0" / "model_r1-r2-r3-r4.npz").exists()
    assert not (trained_run / "fold_1").exists()
    curves = pd.read_csv(trained_run / "training_curves.csv")
    assert curves["epoch"].tolist() == [0, 1]
    summary = json.loads((trained_run / "architecture.json").read_text())["r1-r2-r3-r4"]
    assert summary["tokens"]["source"] == "relation_tokens"
    assert summary["backbone"]["layers"][-1]["output_shape"] == [8, 1, 1]


def test_evaluate_selected_strategies_and_mode(trained_run, tmp_path):
    report_dir = tmp_path / "report"
    code = launcher.main(["evaluate", "--checkpoint", str(trained_run), "--report-dir", str(report_dir),
                          "--strategies", "S8,S15", "--mode", "self"])
    assert code == launcher.EXIT_OK
    document = json.loads((report_dir / "report.json").read_text())
    assert document["strategies"] == ["S15"]
    estimates = pd.read_csv(report_dir / "estimates.csv")
    assert len(estimates) == 6
    assert (report_dir / "scatter.png").exists()


def test_evaluate_rejects_checkpoints_of_another_architecture(trained_run):
    code = launcher.main(["evaluate", "--checkpoint", str(trained_run), "--set", "head.fc_width=32"])
    assert code == launcher.EXIT_INVALID


def test_evaluate_without_checkpoints(trained_run, tmp_path):
    code = launcher.main(["evaluate", "--preset", "smoke", "--checkpoint", str(tmp_path),
                          "--data-dir", str(trained_run / "data")])
    assert code == launcher.EXIT_INVALID


def test_evaluate_rejects_unknown_strategy(trained_run):
    code = launcher.main(["evaluate", "--checkpoint", str(trained_run), "--strategies", "S3,S99"])
    assert code == launcher.EXIT_INVALID


def test_cv_then_compare(trained_run, tmp_path):
    run = tmp_path / "cv"
    code = launcher.main(["cv", "--preset", "smoke", "--output-dir", str(run),
                          "--data-dir", str(trained_run / "data"), "--set", "cv.folds=[0, 1]"])
    assert code == launcher.EXIT_OK
    report = run / "report"
    assert (report / "report.json").exists()

    output = tmp_path / "comparison"
    code = launcher.main(["compare", str(report), str(report / "report.json"), "--names", "first,second",
                          "--output", str(output)])
    assert code == launcher.EXIT_OK
    table = pd.read_csv(output / "comparison.csv", index_col=0)
    assert table.loc["second", "p"] == 1.0
    assert table["average_rank"].tolist() == [1.5, 1.5]
    assert (output / "comparison_cohort_mae.csv").exists()


def test_compare_needs_one_name_per_report(tmp_path):
    code = launcher.main(["compare", str(tmp_path / "a"), str(tmp_path / "b"), "--names", "only"])
    assert code == launcher.EXIT_INVALID


def test_estimate_from_prediction_csv(tmp_path):
    predictions = pd.DataFrame({
        "pair_id": ["p0", "p1", "p2"],
        "x_id": ["a", "a", "b"],
        "y_id": ["b", "a", "b"],
        "r1_hat": [50.0, 40.0, 60.0],
        "r2_hat": [-10.0, 0.0, 0.0],
        "r3_hat": [30.0, 20.0, 30.0],
        "r4_hat": [20.0, 20.0, 30.0],
    })
    path = tmp_path / "predictions.csv"
    predictions.to_csv(path, index=False)
    output = tmp_path / "out" / "estimates.csv"
    code = launcher.main(["estimate", str(path), "--output", str(output), "--strategies", "S1,S10"])
    assert code == launcher.EXIT_OK
    estimates = pd.read_csv(output, index_col=0)
    assert list(estimates.columns) == ["S1", "S10"]
    assert estimates.loc["a", "S1"] == 20.0
    assert estimates.loc["b", "S10"] == 30.0


def test_bad_override_and_missing_config(tmp_path):
    assert launcher.main(["generate", "--set", "training.epochs"]) == launcher.EXIT_INVALID
    assert launcher.main(["train", "--config", str(tmp_path / "absent.yaml")]) == launcher.EXIT_INVALID
    assert launcher.main(["estimate", str(tmp_path / "absent.csv")]) == launcher.EXIT_INVALID


def test_non_finite_training_exits_with_runtime_code(trained_run, tmp_path, monkeypatch):
    real_loss = training.relation_loss
    monkeypatch.setattr(training, "relation_loss", lambda pred, truth: real_loss(pred, truth) * float("nan"))
    code = launcher.main(["train", "--preset", "smoke", "--output-dir", str(tmp_path / "nan"),
                          "--data-dir", str(trained_run / "data"), "--folds", "0"])
    assert code == launcher.EXIT_RUNTIME
