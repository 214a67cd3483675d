import dataclasses
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import experiments.training as training
from config import load_config
from data_processing.data_processor import CohortDataProcessor
from experiments.cross_validation import run_cv
from experiments.evaluation import EvaluationConfig, random_matching, relation_metrics
from experiments.predictor import AgePredictor, RelationPredictor, checkpoint_name
from experiments.reporting import compare_reports, load_report, write_report
from numerics.checkpoint import load_checkpoint
from numerics.errors import ConfigError, NumericalError
from relations.io import read_predictions
from relations.recovery import ALL_STRATEGIES


@pytest.fixture(scope="module")
def cv_run(tmp_path_factory):
    """Smoke config, its cohort and a full cross-validation report."""
    output_dir = tmp_path_factory.mktemp("cv") / "run"
    config = load_config(preset="smoke", extra={"output_dir": str(output_dir)})
    manifest = CohortDataProcessor(config.data_dir).generate(config.generator, config.seed, k=config.cv.k)
    return config, manifest, run_cv(config, output_dir)


@pytest.fixture(scope="module")
def direct_run(tmp_path_factory):
    """The same cohort cross-validated by the single-image age regressor."""
    output_dir = tmp_path_factory.mktemp("cv") / "direct"
    config = load_config(preset="smoke", extra={"output_dir": str(output_dir), "loss": {"mode": "direct"}})
    CohortDataProcessor(config.data_dir).generate(config.generator, config.seed, k=config.cv.k)
    return config, output_dir, run_cv(config, output_dir)


@pytest.mark.parametrize("mode,count", [("joint", 1), ("pair", 2), ("single", 4)])
def test_learning_mode_decides_checkpoint_count(smoke_config, smoke_cohort, tmp_path, mode, count):
    smoke_config.loss.mode = mode
    smoke_config.training.epochs = 1
    manifest, images = smoke_cohort
    predictor, curves = training.train_fold(smoke_config, manifest, images, 0, tmp_path)
    written = sorted(p.name for p in (tmp_path / "fold_0").glob("*.npz"))
    assert written == sorted(checkpoint_name(s) for s in smoke_config.loss.model_subsets())
    assert len(written) == count
    assert len(predictor.models) == count
    assert curves["model"].nunique() == count


def test_direct_mode_trains_one_age_regressor(smoke_config, smoke_cohort, tmp_path):
    smoke_config.loss.mode = "direct"
    smoke_config.training.epochs = 1
    manifest, images = smoke_cohort
    predictor, curves = training.train_fold(smoke_config, manifest, images, 0, tmp_path)
    assert isinstance(predictor, AgePredictor)
    assert [p.name for p in (tmp_path / "fold_0").glob("*.npz")] == ["model_age.npz"]
    assert "val_mae_age" in curves.columns
    ages = predictor.predict_ages(images[:5])
    assert ages.shape == (5,)
    assert np.isfinite(ages).all()

def test_checkpoints_rebuild_the_trained_predictor(smoke_config, smoke_cohort, tmp_path):
    manifest, images = smoke_cohort
    trained, _ = training.train_fold(smoke_config, manifest, images, 1, tmp_path)
    loaded = RelationPredictor.from_checkpoints(tmp_path / "fold_1", smoke_config)
    np.testing.assert_array_equal(trained.predict(images[:3], images[3:6]), loaded.predict(images[:3], images[3:6]))


def test_resumed_training_follows_the_same_trajectory(smoke_config, smoke_cohort, tmp_path):
    manifest, images = smoke_cohort
    training.train_fold(smoke_config, manifest, images, 0, tmp_path / "straight")

    smoke_config.training.epochs = 1
    training.train_fold(smoke_config, manifest, images, 0, tmp_path / "resumed")
    smoke_config.training.epochs = 2
    _, curves = training.train_fold(smoke_config, manifest, images, 0, tmp_path / "resumed", resume=True)

    name = checkpoint_name(smoke_config.loss.model_subsets()[0])
    straight = load_checkpoint(tmp_path / "straight" / "fold_0" / name)
    resumed = load_checkpoint(tmp_path / "resumed" / "fold_0" / name)
    assert resumed.epoch == straight.epoch == 2
    for key, value in straight.model_state.items():
        np.testing.assert_array_equal(resumed.model_state[key], value, err_msg=key)
    assert resumed.optimizer_state["step_count"] == straight.optimizer_state["step_count"]
    pd.testing.assert_frame_equal(pd.DataFrame(resumed.extra["history"]), pd.DataFrame(straight.extra["history"]))
    assert curves["epoch"].tolist() == [0, 1]


def test_resume_rejects_checkpoint_of_another_architecture(smoke_config, smoke_cohort, tmp_path):
    manifest, images = smoke_cohort
    smoke_config.training.epochs = 1
    training.train_fold(smoke_config, manifest, images, 0, tmp_path)
    smoke_config.head.fc_width = 32
    with pytest.raises(ConfigError, match="different config"):
        training.train_fold(smoke_config, manifest, images, 0, tmp_path, resume=True)
    with pytest.raises(ConfigError, match="config hash"):
        RelationPredictor.from_checkpoints(tmp_path / "fold_0", smoke_config)


def test_missing_checkpoint_is_reported(smoke_config, tmp_path):
    with pytest.raises(FileNotFoundError, match="train this fold"):
        RelationPredictor.from_checkpoints(tmp_path / "fold_0", smoke_config)


def test_non_finite_loss_aborts_with_location(smoke_config, smoke_cohort, tmp_path, monkeypatch):
    manifest, images = smoke_cohort
    real_loss = training.relation_loss
    monkeypatch.setattr(training, "relation_loss", lambda pred, truth: real_loss(pred, truth) * float("nan"))
    with pytest.raises(NumericalError, match="epoch 0 batch 0"):
        training.train_fold(smoke_config, manifest, images, 0, tmp_path)


def test_training_config_validation():
    with pytest.raises(ConfigError):
        training.TrainingConfig(half_period=0).validate()
    with pytest.raises(ConfigError):
        training.TrainingConfig(dtype="float16").validate()
    assert training.TrainingConfig(batch_size=20).steps_per_epoch(1600) == 80


@pytest.mark.parametrize("n", [2, 7, 30])
def test_random_matching_pairs_everyone(n):
    x, y = random_matching(n, np.random.default_rng(n))
    assert len(x) == len(y) == (n + 1) // 2
    assert not np.any(x == y)
    assert set(x) | set(y) == set(range(n))
    matched = np.concatenate([x[: n // 2], y[: n // 2]])
    assert len(set(matched)) == 2 * (n // 2)


def test_random_matching_needs_two_subjects():
    with pytest.raises(ValueError):
        random_matching(1, np.random.default_rng(0))


def test_evaluation_strategy_selection():
    assert EvaluationConfig(modes=["self"]).selected_strategies() == ["S10", "S11", "S12", "S13", "S14", "S15",
                                                                     "S16"]
    assert EvaluationConfig(strategies=["S8", "S15"], modes=["reference"]).selected_strategies() == ["S8"]
    with pytest.raises(ConfigError):
        EvaluationConfig(modes=["crossed"]).validate()


def test_cross_validation_holds_out_every_subject_once(cv_run):
    config, manifest, report = cv_run
    assert report.estimates.index.is_unique
    assert set(report.estimates.index) == set(manifest["id"])
    folds = manifest.set_index("id")["fold"]
    assert (report.estimates["fold"] == folds.loc[report.estimates.index]).all()
    assert sorted(report.fold_metrics["fold"].unique()) == list(range(config.cv.k))


def test_cross_validation_reports_every_strategy(cv_run):
    _, _, report = cv_run
    assert report.strategies == list(ALL_STRATEGIES)
    assert list(report.summary.index) == list(ALL_STRATEGIES)
    assert not report.estimates[list(ALL_STRATEGIES)].isna().any().any()
    assert {"self_mean_abs_r2", "cross_mean_abs_r2"} <= set(report.self_vs_cross)
    assert set(report.t_tests.index) == set(ALL_STRATEGIES) - {"S4"}


def test_fold_mean_is_mean_of_folds(cv_run):
    _, _, report = cv_run
    per_fold = report.fold_metrics.set_index(["strategy", "fold"])["mae"]
    for strategy in ("S3", "S4", "S16"):
        assert report.summary.loc[strategy, "mae_mean"] == pytest.approx(per_fold.loc[strategy].mean())


def test_training_curves_cover_every_fold(cv_run):
    config, _, report = cv_run
    curves = report.training_curves
    assert len(curves) == config.cv.k * config.training.epochs
    assert {"loss", "lr", "val_mae_r1", "val_mae_r4"} <= set(curves.columns)


def test_report_round_trip_and_self_comparison(cv_run, tmp_path):
    _, _, report = cv_run
    paths = write_report(report, tmp_path / "report")
    for name in ("report", "estimates", "fold_metrics", "scatter", "uncertainty", "scatter_plot", "training_plot"):
        assert paths[name].exists(), name

    loaded = load_report(tmp_path / "report")
    assert loaded.config_hash == report.config_hash
    assert loaded.strategies == report.strategies
    np.testing.assert_allclose(loaded.estimates["S3"].loc[report.estimates.index], report.estimates["S3"], atol=1e-5)

    table, cohort_mae = compare_reports({"a": loaded, "b": loaded})
    assert table["p"].tolist() == [1.0, 1.0]
    assert table["average_rank"].tolist() == [1.5, 1.5]
    assert list(cohort_mae.index) == ["a", "b"]


def test_comparison_requires_the_same_subjects(cv_run):
    _, _, report = cv_run
    fewer = dataclasses.replace(report, estimates=report.estimates.iloc[1:])
    with pytest.raises(ValueError, match="different subject set"):
        compare_reports({"full": report, "fewer": fewer})


def test_report_writes_relation_metrics_and_fold_predictions(cv_run, tmp_path):
    config, manifest, report = cv_run
    paths = write_report(report, tmp_path / "report", plots=False)

    table = pd.read_csv(paths["relation_metrics"])
    assert list(table.columns) == ["fold", "mode", "relation", "mae", "cs", "pearson", "n"]
    assert sorted(table["fold"].unique()) == list(range(config.cv.k))
    assert set(table["relation"]) == {"r1", "r2", "r3", "r4"}
    assert np.isfinite(table["mae"]).all()
    assert len(load_report(tmp_path / "report").relation_metrics) == len(table)

    ages = manifest.set_index("id")["tau_years"]
    for fold in range(config.cv.k):
        predictions = read_predictions(paths[f"predictions_fold_{fold}"])
        assert len(predictions) == len(report.predictions[fold])
        assert set(predictions["x_id"]) <= set(manifest.loc[manifest["fold"] == fold, "id"])
        recomputed = relation_metrics(predictions, ages, config.generator.max_age, report.alpha)
        written = table[table["fold"] == fold].drop(columns="fold").reset_index(drop=True)
        keys = ["mode", "relation", "n"]
        assert recomputed[keys].values.tolist() == written[keys].values.tolist()
        np.testing.assert_allclose(recomputed["mae"], written["mae"], atol=1e-4)


def test_relation_metrics_of_exact_predictions():
    ages = pd.Series([10.0, 40.0, 70.0], index=["a", "b", "c"])
    predictions = pd.DataFrame({
        "x_id": ["a", "b"], "y_id": ["b", "c"], "mode": ["paired", "paired"],
        # r1..r4 of (10, 40) and (40, 70) with A = 100
        "r1_hat": [50.0, 110.0], "r2_hat": [-30.0, -30.0], "r3_hat": [40.0, 70.0], "r4_hat": [10.0, 40.0],
    })
    table = relation_metrics(predictions, ages, max_age=100.0)
    assert table["relation"].tolist() == ["r1", "r2", "r3", "r4"]
    assert table["mae"].tolist() == [0.0, 0.0, 0.0, 0.0]
    assert table["cs"].tolist() == [100.0] * 4
    assert (table["n"] == 2).all()
    assert np.isnan(table.loc[1, "pearson"])


def test_direct_baseline_cross_validates_single_images(direct_run, cv_run, tmp_path):
    config, output_dir, report = direct_run
    _, manifest, _ = cv_run
    assert report.strategies == ["direct"]
    assert set(report.estimates.index) == set(manifest["id"])
    assert not report.estimates["direct"].isna().any()
    assert report.relation_metrics is None and report.predictions == {}
    for fold in range(config.cv.k):
        assert [p.name for p in (Path(output_dir) / f"fold_{fold}").glob("*.npz")] == ["model_age.npz"]
    assert isinstance(AgePredictor.from_checkpoints(Path(output_dir) / "fold_0", config), AgePredictor)

    write_report(report, tmp_path / "direct")
    assert load_report(tmp_path / "direct").strategies == ["direct"]


def test_relation_learning_compares_against_the_direct_baseline(cv_run, direct_run):
    _, _, relations = cv_run
    _, _, direct = direct_run
    table, cohort_mae = compare_reports({"relations": relations, "direct": direct}, strategy="S3")
    assert table["strategy"].to_dict() == {"relations": "S3", "direct": "direct"}
    assert table.loc["relations", "p"] == 1.0
    assert np.isfinite(table["p"]).all()
    expected = (direct.estimates["direct"] - direct.estimates["tau_years"]).abs().mean()
    assert table.loc["direct", "mae"] == pytest.approx(expected)
    assert list(cohort_mae.index) == ["relations", "direct"]
