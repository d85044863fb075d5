from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from annoaudit.cli import ExperimentConfig, main, run_experiment

CONFIG = {
    "generator": {"n_annotators": 12, "n_tasks": 900, "n_days": 60, "seed": 5},
    "split": {"seed": 1},
    "tune": {
        "n_iter": 2,
        "seed": 2,
        "space": {"n_estimators": [10, 50], "max_depth": [3], "learning_rate": [0.1, 0.2]},
    },
    "explain": {"max_rows": 128},
    "audit": {"lift_checkpoints": [20, 50]},
}


@pytest.fixture(scope="module")
def experiment_dir(tmp_path_factory) -> Path:
    base = tmp_path_factory.mktemp("experiment")
    config_path = base / "config.json"
    config_path.write_text(json.dumps(CONFIG))
    out = base / "run"
    assert main(["experiment", "--config", str(config_path), "--out", str(out)]) == 0
    return out


class TestExperiment:
    def test_manifest_is_complete(self, experiment_dir):
        manifest = json.loads((experiment_dir / "manifest.json").read_text())
        assert manifest["complete"] is True
        assert manifest["failed_stage"] is None
        assert "log.jsonl" in manifest["artifacts"]

    def test_generalization_matrix_has_sixteen_cells(self, experiment_dir):
        with (experiment_dir / "generalization_auc.csv").open() as handle:
            rows = list(csv.reader(handle))
        assert len(rows) == 5  # header + 4 models
        assert len(rows[0]) == 5  # name column + 4 test sets
        cells = [float(v) for row in rows[1:] for v in row[1:]]
        assert len(cells) == 16
        assert all(0.0 <= v <= 1.0 for v in cells)

    def test_eval_reports_exist_per_model(self, experiment_dir):
        for name in ("music_streaming", "mobile_applications", "video_streaming", "task_agnostic"):
            report = json.loads((experiment_dir / f"eval_{name}.json").read_text())
            assert 0.0 <= report["auc"] <= 1.0
            assert report["threshold"] == 0.5

    def test_curves_and_figures_present(self, experiment_dir):
        for name in ("music_streaming", "mobile_applications", "video_streaming", "combined"):
            assert (experiment_dir / f"audit_curve_{name}.csv").exists()
        for figure in ("audit_flip_rate.svg", "audit_coverage.svg", "cumulative_importance.svg",
                       "generalization_auc.svg"):
            assert (experiment_dir / figure).exists()

    def test_importance_correlation_is_square_symmetric(self, experiment_dir):
        with (experiment_dir / "importance_correlation.csv").open() as handle:
            rows = list(csv.reader(handle))
        names = rows[0][1:]
        values = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
        assert values.shape == (len(names), len(names))
        assert np.allclose(values, values.T)
        assert np.allclose(np.diag(values), 1.0)

    def test_rerun_is_byte_identical(self, experiment_dir, tmp_path):
        out = tmp_path / "again"
        run_experiment(ExperimentConfig.from_dict(CONFIG), out)
        first = sorted(p.name for p in experiment_dir.iterdir())
        second = sorted(p.name for p in out.iterdir())
        assert first == second
        for name in first:
            assert (out / name).read_bytes() == (experiment_dir / name).read_bytes(), name


class TestStageCommands:
    def test_stage_pipeline_matches_experiment(self, experiment_dir, tmp_path):
        """Re-running train+evaluate from the experiment's own artifacts reproduces its report."""
        features = experiment_dir / "features.csv"
        split = experiment_dir / "split.json"
        params = experiment_dir / "best_params_task_agnostic.json"

        train_out = tmp_path / "train"
        assert main([
            "train", "--features", str(features), "--split", str(split),
            "--params", str(params), "--name", "task_agnostic", "--out", str(train_out),
        ]) == 0

        eval_out = tmp_path / "eval"
        assert main([
            "evaluate", "--model", str(train_out / "model_task_agnostic.json"),
            "--features", str(features), "--split", str(split), "--out", str(eval_out),
        ]) == 0
        stage_report = json.loads((eval_out / "eval.json").read_text())
        bundle_report = json.loads((experiment_dir / "eval_task_agnostic.json").read_text())
        assert stage_report == bundle_report

    def test_standalone_audit_reproduces_the_bundle_curve(self, experiment_dir, tmp_path):
        out = tmp_path / "audit"
        assert main([
            "audit-sim", "--model", str(experiment_dir / "model_task_agnostic.json"),
            "--features", str(experiment_dir / "features.csv"),
            "--split", str(experiment_dir / "split.json"), "--out", str(out),
        ]) == 0
        assert (out / "audit_curve.csv").read_bytes() == \
            (experiment_dir / "audit_curve_combined.csv").read_bytes()

    def test_standalone_explain_reproduces_the_bundle_shap(self, experiment_dir, tmp_path):
        out = tmp_path / "explain"
        assert main([
            "explain", "--model", str(experiment_dir / "model_task_agnostic.json"),
            "--features", str(experiment_dir / "features.csv"),
            "--split", str(experiment_dir / "split.json"),
            "--max-rows", "128", "--seed", "0", "--out", str(out),
        ]) == 0
        assert (out / "shap.csv").read_bytes() == \
            (experiment_dir / "shap_task_agnostic.csv").read_bytes()
        assert (out / "importance.csv").read_bytes() == \
            (experiment_dir / "importance_task_agnostic.csv").read_bytes()

    def test_generate_creates_missing_directories_and_is_deterministic(self, tmp_path):
        config_path = tmp_path / "gen.json"
        config_path.write_text(json.dumps({"generator": {"n_annotators": 4, "n_tasks": 60, "seed": 9}}))
        out_a = tmp_path / "deep" / "nested" / "a"
        out_b = tmp_path / "b"
        assert main(["generate", "--config", str(config_path), "--out", str(out_a)]) == 0
        assert main(["generate", "--config", str(config_path), "--out", str(out_b)]) == 0
        assert (out_a / "log.jsonl").read_bytes() == (out_b / "log.jsonl").read_bytes()
        assert (out_a / "true_probabilities.jsonl").exists()

    def test_generate_empty_log_is_valid(self, tmp_path):
        config_path = tmp_path / "gen.json"
        config_path.write_text(json.dumps({"generator": {"n_annotators": 3, "n_tasks": 0, "seed": 1}}))
        out = tmp_path / "empty"
        assert main(["generate", "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "log.jsonl").read_text() == ""

    def test_tune_and_preprocess_stages(self, experiment_dir, tmp_path):
        features = experiment_dir / "features.csv"
        split = experiment_dir / "split.json"
        pre_out = tmp_path / "pre"
        assert main(["preprocess", "--features", str(features), "--split", str(split),
                     "--out", str(pre_out)]) == 0
        assert (pre_out / "preprocessor.json").exists()
        assert (pre_out / "design_train.csv").exists()

        space = tmp_path / "space.json"
        space.write_text(json.dumps({"n_estimators": [10], "max_depth": [3]}))
        tune_out = tmp_path / "tune"
        assert main(["tune", "--features", str(features), "--split", str(split),
                     "--n-iter", "2", "--space", str(space), "--out", str(tune_out)]) == 0
        history = (tune_out / "search_history.csv").read_text().strip().splitlines()
        assert len(history) == 3  # header + 2 draws

    def test_explain_respects_skip_flag(self, experiment_dir, tmp_path):
        config_path = tmp_path / "skip.json"
        skipping = dict(CONFIG)
        skipping["flags"] = {"skip_shap": True}
        config_path.write_text(json.dumps(skipping))
        code = main([
            "explain", "--model", str(experiment_dir / "model_task_agnostic.json"),
            "--features", str(experiment_dir / "features.csv"),
            "--split", str(experiment_dir / "split.json"),
            "--config", str(config_path), "--out", str(tmp_path / "x"),
        ])
        assert code == 1  # stage disabled is a usage error

    def test_audit_on_single_class_subset_is_a_data_error(self, experiment_dir, tmp_path):
        # carve a split whose "test" ids are all correct annotations
        scores_file = experiment_dir / "scores_task_agnostic.csv"
        with scores_file.open() as handle:
            rows = list(csv.DictReader(handle))
        clean_ids = [r["task_id"] for r in rows if r["is_error"] == "false"][:30]
        split = json.loads((experiment_dir / "split.json").read_text())
        degenerate = {"seed": 0, "train_ids": split["train_ids"], "validation_ids": [],
                      "test_ids": clean_ids}
        split_path = tmp_path / "degenerate_split.json"
        split_path.write_text(json.dumps(degenerate))
        code = main([
            "audit-sim", "--model", str(experiment_dir / "model_task_agnostic.json"),
            "--features", str(experiment_dir / "features.csv"),
            "--split", str(split_path), "--out", str(tmp_path / "a"),
        ])
        assert code == 2

    def test_unknown_arguments_exit_one(self, capsys):
        assert main(["experiment", "--nope"]) == 1

    def test_missing_config_file_exits_one(self, tmp_path):
        assert main(["experiment", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1

    def test_toml_config_loads(self, tmp_path):
        config_path = tmp_path / "cfg.toml"
        config_path.write_text(
            "[generator]\nn_annotators = 3\nn_tasks = 40\nseed = 2\n\n[split]\nseed = 4\n"
        )
        config = ExperimentConfig.from_file(config_path)
        assert config.generator.n_tasks == 40
        assert config.split_seed == 4


class TestFailureAndAlternateInputs:
    def test_failed_stage_is_recorded_in_manifest(self, tmp_path):
        config_path = tmp_path / "cfg.json"
        # 30 events: split works, but per-application tuning subsets are too small
        config_path.write_text(json.dumps({
            "generator": {"n_annotators": 4, "n_tasks": 30, "seed": 3},
            "tune": {"n_iter": 1, "space": {"n_estimators": [10], "max_depth": [3]}},
        }))
        out = tmp_path / "run"
        code = main(["experiment", "--config", str(config_path), "--out", str(out)])
        assert code == 2
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["complete"] is False
        assert manifest["failed_stage"] == "tune-train-evaluate"

    def test_experiment_runs_from_an_existing_log(self, experiment_dir, tmp_path):
        config = {
            "data": {
                "log_path": str(experiment_dir / "log.jsonl"),
                "profiles_path": str(experiment_dir / "profiles.jsonl"),
            },
            "split": {"seed": 1},
            "tune": {"n_iter": 1, "seed": 2,
                     "space": {"n_estimators": [10], "max_depth": [3]}},
            "flags": {"skip_shap": True, "skip_audit": True},
        }
        config_path = tmp_path / "cfg.json"
        config_path.write_text(json.dumps(config))
        out = tmp_path / "run"
        assert main(["experiment", "--config", str(config_path), "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["complete"] is True
        assert not (out / "audit_summary.json").exists()
        assert not (out / "importances.csv").exists()
