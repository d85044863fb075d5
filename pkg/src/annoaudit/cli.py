"""Command-line pipeline: generate -> featurize -> tune -> train -> evaluate ->
explain -> audit-sim, plus a one-shot `experiment` that runs everything.

Every stage reads and writes plain files, so any stage can be re-run from its
predecessor's outputs. All artifacts are reproducible byte for byte: seeds come
from the config and no file carries a timestamp.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from . import plots
from .errors import (
    AnnoAuditError,
    CalibrationError,
    DegenerateDataError,
    InvariantError,
    LogValidationError,
    ParseError,
    SchemaError,
    UsageError,
)
from .evaluation import (
    SearchSpace,
    TrainedModel,
    cross_application_matrix,
    evaluate_model,
    fit_final,
    predict_scores,
    random_search,
)
from .events import Application, DatasetSplit, read_log, split_log, write_log
from .explain import correlation_matrix, correlation_to_csv, importance, importances_to_csv, shap_values
from .features import FeatureMatrix, FeatureSchema, build_feature_matrix
from .gbdt import Hyperparams
from .preprocess import fit as fit_preprocessor
from .preprocess import transform
from .synth import GenConfig, generate_log, generate_population, read_profiles, write_profiles, write_sidecar

TASK_AGNOSTIC = "task_agnostic"
MODEL_ORDER = [app.value for app in Application] + [TASK_AGNOSTIC]


@dataclass
class ExperimentConfig:
    generator: GenConfig | None = None
    log_path: str | None = None
    profiles_path: str | None = None
    split_seed: int = 0
    test_fraction: float = 0.30
    validation_fraction: float = 0.30
    n_iter: int = 50
    tune_seed: int = 0
    n_jobs: int = 1
    space: SearchSpace = field(default_factory=SearchSpace)
    applications: list[str] = field(default_factory=lambda: [app.value for app in Application])
    shap_max_rows: int = 2048
    shap_seed: int = 0
    audit_target_coverage: float = 0.8
    lift_checkpoints: tuple[int, ...] = (50, 100, 500)
    skip_shap: bool = False
    skip_audit: bool = False

    def __post_init__(self):
        if self.generator is None and self.log_path is None:
            raise UsageError("config needs either a [generator] section or a log_path")
        unknown = set(self.applications) - {app.value for app in Application}
        if unknown:
            raise UsageError(f"unknown applications: {sorted(unknown)}")
        if self.n_iter < 1:
            raise UsageError("tune.n_iter must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known_sections = {"generator", "data", "split", "tune", "explain", "audit", "flags"}
        unknown = set(data) - known_sections
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")
        gen = data.get("generator")
        split = data.get("split", {})
        tune = data.get("tune", {})
        explain_cfg = data.get("explain", {})
        audit_cfg = data.get("audit", {})
        flags = data.get("flags", {})
        data_cfg = data.get("data", {})
        return cls(
            generator=GenConfig.from_dict(gen) if gen is not None else None,
            log_path=data_cfg.get("log_path"),
            profiles_path=data_cfg.get("profiles_path"),
            split_seed=int(split.get("seed", 0)),
            test_fraction=float(split.get("test_fraction", 0.30)),
            validation_fraction=float(split.get("validation_fraction", 0.30)),
            n_iter=int(tune.get("n_iter", 50)),
            tune_seed=int(tune.get("seed", 0)),
            n_jobs=int(tune.get("n_jobs", 1)),
            space=SearchSpace.from_dict(tune.get("space", {})),
            applications=list(data_cfg.get("applications", [app.value for app in Application])),
            shap_max_rows=int(explain_cfg.get("max_rows", 2048)),
            shap_seed=int(explain_cfg.get("seed", 0)),
            audit_target_coverage=float(audit_cfg.get("target_coverage", 0.8)),
            lift_checkpoints=tuple(audit_cfg.get("lift_checkpoints", (50, 100, 500))),
            skip_shap=bool(flags.get("skip_shap", False)),
            skip_audit=bool(flags.get("skip_audit", False)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise UsageError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            try:
                import tomllib as toml_lib
            except ModuleNotFoundError:
                import tomli as toml_lib

            data = toml_lib.loads(text)
        else:
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path.name}: invalid JSON config: {exc}") from exc
        return cls.from_dict(data)

    def canonical_dict(self) -> dict:
        return {
            "generator": self.generator.to_dict() if self.generator else None,
            "log_path": self.log_path,
            "profiles_path": self.profiles_path,
            "split": {
                "seed": self.split_seed,
                "test_fraction": self.test_fraction,
                "validation_fraction": self.validation_fraction,
            },
            "tune": {"n_iter": self.n_iter, "seed": self.tune_seed, "space": self.space.to_dict()},
            "applications": self.applications,
            "explain": {"max_rows": self.shap_max_rows, "seed": self.shap_seed},
            "audit": {
                "target_coverage": self.audit_target_coverage,
                "lift_checkpoints": list(self.lift_checkpoints),
            },
            "flags": {"skip_shap": self.skip_shap, "skip_audit": self.skip_audit},
        }

    def sha256(self) -> str:
        canon = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def _log(message: str) -> None:
    print(f"[annoaudit] {message}", flush=True)


def _schema_path(features_path: Path) -> Path:
    return features_path.with_name(features_path.stem + ".schema.json")


def _load_features(features_path: str | Path) -> FeatureMatrix:
    features_path = Path(features_path)
    schema_file = _schema_path(features_path)
    if not schema_file.exists():
        raise UsageError(f"feature schema sidecar not found: {schema_file}")
    schema = FeatureSchema.from_json(schema_file.read_text(encoding="utf-8"))
    return FeatureMatrix.from_csv(features_path, schema)


def _load_split(path: str | Path) -> DatasetSplit:
    return DatasetSplit.from_json(Path(path).read_text(encoding="utf-8"))


def _subset_ids(split: DatasetSplit, subset: str) -> list[str]:
    if subset == "train":
        return sorted(set(split.train_ids) | set(split.validation_ids))
    if subset == "test":
        return list(split.test_ids)
    if subset == "validation":
        return list(split.validation_ids)
    if subset == "all":
        return sorted(set(split.train_ids) | set(split.validation_ids) | set(split.test_ids))
    raise UsageError(f"unknown subset {subset!r}")


# --- stage implementations -------------------------------------------------------


def run_generate(config: ExperimentConfig, out_dir: Path) -> dict[str, Path]:
    if config.generator is None:
        raise UsageError("generate needs a [generator] section in the config")
    out_dir.mkdir(parents=True, exist_ok=True)
    population = generate_population(config.generator)
    generated = generate_log(population, config.generator)
    paths = {
        "log": out_dir / "log.jsonl",
        "profiles": out_dir / "profiles.jsonl",
        "sidecar": out_dir / "true_probabilities.jsonl",
    }
    write_log(generated.events, paths["log"])
    write_profiles(population[0], paths["profiles"])
    write_sidecar(generated.events, generated.true_error_probability, paths["sidecar"])
    _log(
        f"generated {len(generated.events)} events, realized error rate "
        f"{generated.realized_error_rate:.4f}"
    )
    return paths


def run_featurize(log_path: Path, profiles_path: Path, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    events = read_log(log_path)
    profiles = read_profiles(profiles_path)
    matrix = build_feature_matrix(events, profiles)
    features_path = out_dir / "features.csv"
    matrix.to_csv(features_path)
    _schema_path(features_path).write_text(matrix.schema.to_json(), encoding="utf-8")
    _log(f"featurized {matrix.n_rows} events into {len(matrix.schema.names)} columns")
    return features_path


def run_split(log_path: Path, config: ExperimentConfig, out_dir: Path) -> Path:
    events = read_log(log_path)
    split = split_log(events, config.test_fraction, config.validation_fraction, config.split_seed)
    path = out_dir / "split.json"
    path.write_text(split.to_json(), encoding="utf-8")
    _log(
        f"split {len(events)} events into train={len(split.train_ids)} "
        f"validation={len(split.validation_ids)} test={len(split.test_ids)}"
    )
    return path


def _model_subsets(
    matrix: FeatureMatrix, split: DatasetSplit, applications: list[str]
) -> dict[str, tuple[FeatureMatrix, FeatureMatrix]]:
    """(train+validation, test) feature matrices per model name."""
    train_ids = set(split.train_ids) | set(split.validation_ids)
    test_ids = set(split.test_ids)
    out: dict[str, tuple[FeatureMatrix, FeatureMatrix]] = {}
    apps_column = matrix.columns["application"]
    included = np.isin(apps_column, np.asarray(applications, dtype=object))
    for name in applications + [TASK_AGNOSTIC]:
        if name == TASK_AGNOSTIC:
            member = included
        else:
            member = apps_column == name
        rows = np.where(member)[0]
        ids = [matrix.task_ids[i] for i in rows]
        train_rows = rows[[task_id in train_ids for task_id in ids]]
        test_rows = rows[[task_id in test_ids for task_id in ids]]
        out[name] = (matrix.subset(train_rows), matrix.subset(test_rows))
    return out


def run_models(
    matrix: FeatureMatrix,
    split: DatasetSplit,
    config: ExperimentConfig,
    out_dir: Path,
) -> tuple[dict[str, TrainedModel], dict[str, FeatureMatrix]]:
    subsets = _model_subsets(matrix, split, config.applications)
    models: dict[str, TrainedModel] = {}
    test_sets: dict[str, FeatureMatrix] = {}
    for index, name in enumerate(config.applications + [TASK_AGNOSTIC]):
        train_m, test_m = subsets[name]
        result = random_search(
            train_m,
            config.space,
            n_iter=config.n_iter,
            seed=config.tune_seed + index,
            n_jobs=config.n_jobs,
        )
        result.history_to_csv(out_dir / f"search_{name}.csv")
        (out_dir / f"best_params_{name}.json").write_text(
            json.dumps(result.best.to_dict(), indent=2), encoding="utf-8"
        )
        model = fit_final(train_m, result.best, name=name)
        (out_dir / f"model_{name}.json").write_text(model.to_json(), encoding="utf-8")
        report = evaluate_model(model, test_m)
        (out_dir / f"eval_{name}.json").write_text(
            json.dumps(report.to_dict(), indent=2), encoding="utf-8"
        )
        _write_scores_csv(model, test_m, out_dir / f"scores_{name}.csv")
        models[name] = model
        test_sets[name] = test_m
        _log(
            f"model {name}: tuned over {config.n_iter} draws, test AUC {report.auc:.4f} "
            f"(accuracy {report.accuracy:.4f})"
        )
    return models, test_sets


def _write_scores_csv(model: TrainedModel, matrix: FeatureMatrix, path: Path) -> None:
    scores = predict_scores(model, matrix)
    lines = ["task_id,score,is_error"]
    for task_id, score, err in zip(matrix.task_ids, scores, matrix.target):
        lines.append(f"{task_id},{score!r},{'true' if err else 'false'}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_generalization(
    models: dict[str, TrainedModel],
    test_sets: dict[str, FeatureMatrix],
    config: ExperimentConfig,
    out_dir: Path,
):
    columns = {name: test_sets[name] for name in config.applications}
    columns["combined"] = test_sets[TASK_AGNOSTIC]
    matrix = cross_application_matrix(models, columns)
    matrix.to_csv(out_dir / "generalization_auc.csv")
    plots.plot_auc_matrix(matrix, out_dir / "generalization_auc.svg")
    _log(f"generalization matrix: {len(matrix.row_names)} models x {len(matrix.col_names)} test sets")
    return matrix


def run_explain(
    models: dict[str, TrainedModel],
    test_sets: dict[str, FeatureMatrix],
    config: ExperimentConfig,
    out_dir: Path,
):
    importances = {}
    for name, model in models.items():
        test_m = test_sets[name]
        X, _ = transform(model.preprocessor, test_m)
        if X.shape[0] > config.shap_max_rows:
            rng = np.random.default_rng(config.shap_seed)
            keep = np.sort(rng.choice(X.shape[0], size=config.shap_max_rows, replace=False))
            X = X[keep]
        shap = shap_values(model.ensemble, X)
        shap.to_csv(out_dir / f"shap_{name}.csv")
        one_hot_map = dict(
            zip(model.preprocessor.design_columns(), model.preprocessor.design_source_features())
        )
        vector = importance(shap, one_hot_map)
        vector.to_csv(out_dir / f"importance_{name}.csv")
        importances[name] = vector
        _log(f"explained {name} on {X.shape[0]} rows; top feature: {vector.names[0]}")
    importances_to_csv(importances, out_dir / "importances.csv")
    names, values = correlation_matrix(importances)
    correlation_to_csv(names, values, out_dir / "importance_correlation.csv")
    plots.plot_cumulative_importance(importances, out_dir / "cumulative_importance.svg")
    return importances


def run_audit(
    models: dict[str, TrainedModel],
    test_sets: dict[str, FeatureMatrix],
    config: ExperimentConfig,
    out_dir: Path,
) -> dict:
    curve_sources = {name: (models[name], test_sets[name]) for name in config.applications}
    curve_sources["combined"] = (models[TASK_AGNOSTIC], test_sets[TASK_AGNOSTIC])
    curves_by_name = {}
    summary: dict[str, dict] = {}
    for name, (model, matrix) in curve_sources.items():
        scores = predict_scores(model, matrix)
        ranking = audit_mod.rank_for_audit(scores, matrix.task_ids, matrix.target)
        curves = audit_mod.compute_curves(ranking)
        curves.to_csv(out_dir / f"audit_curve_{name}.csv")
        curves_by_name[name] = curves
        gain = audit_mod.efficiency_gain(curves, config.audit_target_coverage)
        lifts = {
            f"lift_at_{k}": audit_mod.early_lift(curves, min(k, curves.n_total))
            for k in config.lift_checkpoints
        }
        summary[name] = {
            "n_audited": curves.n_total,
            "n_errors": curves.n_errors,
            "baseline_rate": curves.random_baseline_rate,
            "target_coverage": config.audit_target_coverage,
            "k_model": gain.k_model,
            "k_random": gain.k_random,
            "efficiency_gain": gain.gain,
            **lifts,
        }
        _log(f"audit {name}: gain {gain.gain:.3f} at {config.audit_target_coverage:.0%} coverage")
    (out_dir / "audit_summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    plots.plot_flip_rate(curves_by_name, out_dir / "audit_flip_rate.svg")
    plots.plot_coverage(curves_by_name, out_dir / "audit_coverage.svg")
    return summary


def _write_summary(
    out_dir: Path,
    config: ExperimentConfig,
    split: DatasetSplit,
    models: dict[str, TrainedModel],
    test_sets: dict[str, FeatureMatrix],
    generalization,
    audit_summary: dict | None,
) -> None:
    lines = ["annoaudit experiment summary", f"config sha256: {config.sha256()}", ""]
    lines.append(
        f"events: train={len(split.train_ids)} validation={len(split.validation_ids)} "
        f"test={len(split.test_ids)}"
    )
    lines.append("")
    lines.append("model evaluations on the test split")
    lines.append("model,auc,accuracy,macro_precision,macro_recall,n_test")
    for name, model in models.items():
        report = evaluate_model(model, test_sets[name])
        lines.append(
            f"{name},{report.auc:.6f},{report.accuracy:.6f},"
            f"{report.macro_precision:.6f},{report.macro_recall:.6f},{report.n_test}"
        )
    lines.append("")
    lines.append("cross-application AUC (rows: training source, columns: test set)")
    lines.append("," + ",".join(generalization.col_names))
    for name, row in zip(generalization.row_names, generalization.values):
        lines.append(name + "," + ",".join(f"{v:.6f}" for v in row))
    if audit_summary:
        lines.append("")
        lines.append(f"audit efficiency at {config.audit_target_coverage:.0%} coverage")
        lines.append("curve,k_model,k_random,gain")
        for name, entry in audit_summary.items():
            lines.append(f"{name},{entry['k_model']},{entry['k_random']},{entry['efficiency_gain']:.6f}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_experiment(config: ExperimentConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config_sha256": config.sha256(),
        "config": config.canonical_dict(),
        "complete": False,
        "failed_stage": None,
        "artifacts": [],
    }
    stage = "setup"

    def checkpoint() -> None:
        manifest["artifacts"] = sorted(p.name for p in out_dir.iterdir() if p.is_file())
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")

    try:
        stage = "generate"
        if config.generator is not None:
            paths = run_generate(config, out_dir)
            log_path, profiles_path = paths["log"], paths["profiles"]
        else:
            log_path, profiles_path = Path(config.log_path), Path(config.profiles_path)

        stage = "featurize"
        features_path = run_featurize(log_path, profiles_path, out_dir)
        matrix = _load_features(features_path)

        stage = "split"
        split = _load_split(run_split(log_path, config, out_dir))

        stage = "tune-train-evaluate"
        models, test_sets = run_models(matrix, split, config, out_dir)

        stage = "generalize"
        generalization = run_generalization(models, test_sets, config, out_dir)

        stage = "explain"
        if not config.skip_shap:
            run_explain(models, test_sets, config, out_dir)

        stage = "audit"
        audit_summary = None
        if not config.skip_audit:
            audit_summary = run_audit(models, test_sets, config, out_dir)

        stage = "summarize"
        _write_summary(out_dir, config, split, models, test_sets, generalization, audit_summary)

        manifest["complete"] = True
        checkpoint()
        _log("experiment complete")
    except Exception:
        manifest["failed_stage"] = stage
        checkpoint()
        _log(f"experiment failed during stage: {stage}")
        raise


# --- argparse wiring ----------------------------------------------------------------


def _cmd_generate(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    run_generate(config, Path(args.out))
    return 0


def _cmd_featurize(args) -> int:
    run_featurize(Path(args.log), Path(args.profiles), Path(args.out))
    return 0


def _cmd_split(args) -> int:
    config = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig(log_path=args.log)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_split(Path(args.log), config, out_dir)
    return 0


def _cmd_preprocess(args) -> int:
    matrix = _load_features(args.features)
    split = _load_split(args.split)
    selected = matrix.select_ids(_subset_ids(split, args.subset))
    state = fit_preprocessor(selected)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "preprocessor.json").write_text(state.to_json(), encoding="utf-8")
    design, names = transform(state, selected)
    lines = [",".join(names)]
    for row in design:
        lines.append(",".join(repr(float(v)) for v in row))
    (out_dir / f"design_{args.subset}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _log(f"fitted preprocessor on {selected.n_rows} rows -> {len(names)} design columns")
    return 0


def _cmd_tune(args) -> int:
    matrix = _load_features(args.features)
    split = _load_split(args.split)
    train_m = matrix.select_ids(_subset_ids(split, "train"))
    space = SearchSpace.from_dict(json.loads(Path(args.space).read_text())) if args.space else SearchSpace()
    result = random_search(train_m, space, n_iter=args.n_iter, seed=args.seed, n_jobs=args.n_jobs)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.history_to_csv(out_dir / "search_history.csv")
    (out_dir / "best_params.json").write_text(json.dumps(result.best.to_dict(), indent=2), encoding="utf-8")
    best_auc = max(r.validation_auc for r in result.history)
    _log(f"tuned {args.n_iter} draws; best validation AUC {best_auc:.4f}")
    return 0


def _cmd_train(args) -> int:
    matrix = _load_features(args.features)
    split = _load_split(args.split)
    train_m = matrix.select_ids(_subset_ids(split, "train"))
    params = Hyperparams.from_dict(json.loads(Path(args.params).read_text(encoding="utf-8")))
    model = fit_final(train_m, params, name=args.name)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"model_{args.name}.json").write_text(model.to_json(), encoding="utf-8")
    _log(f"trained {args.name} on {train_m.n_rows} rows")
    return 0


def _load_model(path: str) -> TrainedModel:
    return TrainedModel.from_json(Path(path).read_text(encoding="utf-8"))


def _select_rows(args) -> FeatureMatrix:
    matrix = _load_features(args.features)
    if args.split:
        matrix = matrix.select_ids(_subset_ids(_load_split(args.split), args.subset))
    if getattr(args, "application", None):
        matrix = matrix.subset(matrix.rows_for_application(args.application))
    return matrix


def _cmd_evaluate(args) -> int:
    model = _load_model(args.model)
    matrix = _select_rows(args)
    report = evaluate_model(model, matrix)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.json").write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    _write_scores_csv(model, matrix, out_dir / "scores.csv")
    _log(f"evaluated {model.name} on {report.n_test} rows: AUC {report.auc:.4f}")
    return 0


def _cmd_explain(args) -> int:
    if args.config:
        config = ExperimentConfig.from_file(args.config)
        if config.skip_shap:
            raise UsageError("stage disabled: the config sets flags.skip_shap")
    model = _load_model(args.model)
    matrix = _select_rows(args)
    X, _ = transform(model.preprocessor, matrix)
    if X.shape[0] > args.max_rows:
        rng = np.random.default_rng(args.seed)
        X = X[np.sort(rng.choice(X.shape[0], size=args.max_rows, replace=False))]
    shap = shap_values(model.ensemble, X)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    shap.to_csv(out_dir / "shap.csv")
    one_hot_map = dict(zip(model.preprocessor.design_columns(), model.preprocessor.design_source_features()))
    vector = importance(shap, one_hot_map)
    vector.to_csv(out_dir / "importance.csv")
    _log(f"explained {X.shape[0]} rows; top feature {vector.names[0]}")
    return 0


def _cmd_audit_sim(args) -> int:
    model = _load_model(args.model)
    matrix = _select_rows(args)
    scores = predict_scores(model, matrix)
    ranking = audit_mod.rank_for_audit(scores, matrix.task_ids, matrix.target)
    curves = audit_mod.compute_curves(ranking)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    curves.to_csv(out_dir / "audit_curve.csv")
    gain = audit_mod.efficiency_gain(curves, args.target_coverage)
    summary = {
        "n_audited": curves.n_total,
        "n_errors": curves.n_errors,
        "baseline_rate": curves.random_baseline_rate,
        "target_coverage": args.target_coverage,
        "k_model": gain.k_model,
        "k_random": gain.k_random,
        "efficiency_gain": gain.gain,
        "lift_at_100": audit_mod.early_lift(curves, min(100, curves.n_total)),
    }
    (out_dir / "audit_summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    plots.plot_flip_rate({model.name: curves}, out_dir / "audit_flip_rate.svg")
    plots.plot_coverage({model.name: curves}, out_dir / "audit_coverage.svg")
    _log(f"audit gain {gain.gain:.3f} at {args.target_coverage:.0%} coverage")
    return 0


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    run_experiment(config, Path(args.out))
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="annoaudit", description="Annotation error modeling and audit prioritization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic audited annotation log")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("featurize", help="build the feature matrix from a log")
    p.add_argument("--log", required=True)
    p.add_argument("--profiles", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("split", help="draw the train/validation/test split")
    p.add_argument("--log", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("preprocess", help="fit preprocessing statistics on a split subset")
    p.add_argument("--features", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--subset", default="train", choices=["train", "validation", "test", "all"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("tune", help="randomized hyperparameter search on the train subset")
    p.add_argument("--features", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--n-iter", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--space", help="JSON file overriding the default search grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("train", help="train the final model with chosen hyperparameters")
    p.add_argument("--features", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--name", default="model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    for name, func, extra in (
        ("evaluate", _cmd_evaluate, ()),
        ("explain", _cmd_explain, ("config", "max_rows", "seed")),
        ("audit-sim", _cmd_audit_sim, ("target_coverage",)),
    ):
        p = sub.add_parser(name, help=f"{name} a trained model on a data subset")
        p.add_argument("--model", required=True)
        p.add_argument("--features", required=True)
        p.add_argument("--split")
        p.add_argument("--subset", default="test", choices=["train", "validation", "test", "all"])
        p.add_argument("--application")
        p.add_argument("--out", required=True)
        if "config" in extra:
            p.add_argument("--config")
        if "max_rows" in extra:
            p.add_argument("--max-rows", type=int, default=2048, dest="max_rows")
            p.add_argument("--seed", type=int, default=0)
        if "target_coverage" in extra:
            p.add_argument("--target-coverage", type=float, default=0.8, dest="target_coverage")
        p.set_defaults(func=func)

    p = sub.add_parser("experiment", help="run the full pipeline from one config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParseError, LogValidationError, SchemaError, DegenerateDataError, CalibrationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 3
    except AnnoAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
