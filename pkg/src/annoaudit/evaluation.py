"""Classifier evaluation, randomized hyperparameter search, and cross-application AUC."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateDataError, UsageError
from .features import FeatureMatrix
from .gbdt import Ensemble, Hyperparams, ensemble_from_json, ensemble_to_json, predict_proba, train
from .preprocess import PreprocessorState, fit as fit_preprocessor, transform


def _rankdata(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based); ties share the mean of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auc(scores: Sequence[float] | np.ndarray, labels: Sequence[int] | np.ndarray) -> float:
    """Rank-based (Mann-Whitney) AUC; tied scores earn half credit per pair."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise UsageError("scores and labels must be 1-D and aligned")
    if not np.isfinite(scores).all():
        raise UsageError("scores must be finite")
    labels = labels.astype(np.int64)
    if not set(np.unique(labels)) <= {0, 1}:
        raise UsageError("labels must be binary 0/1")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDataError("AUC needs both classes present")
    ranks = _rankdata(scores)
    rank_sum_pos = float(ranks[labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class EvalReport:
    """Standard binary-classification metrics at the fixed 0.5 cutoff."""

    auc: float
    accuracy: float
    macro_precision: float
    macro_recall: float
    precision_by_class: tuple[float, float]  # (negative, positive)
    recall_by_class: tuple[float, float]
    threshold: float
    n_test: int

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "precision_by_class": list(self.precision_by_class),
            "recall_by_class": list(self.recall_by_class),
            "threshold": self.threshold,
            "n_test": self.n_test,
        }


def classification_report(
    scores: Sequence[float] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    threshold: float = 0.5,
) -> EvalReport:
    """Accuracy plus per-class and macro precision/recall; prediction = score >= threshold.

    A class that is never predicted gets precision 0 by convention.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    auc_value = auc(scores, labels)  # also validates inputs and both-classes precondition
    preds = (scores >= threshold).astype(np.int64)

    precisions = []
    recalls = []
    for cls in (0, 1):
        predicted = preds == cls
        actual = labels == cls
        hits = int((predicted & actual).sum())
        precisions.append(hits / int(predicted.sum()) if predicted.any() else 0.0)
        recalls.append(hits / int(actual.sum()) if actual.any() else 0.0)

    return EvalReport(
        auc=auc_value,
        accuracy=float((preds == labels).mean()),
        macro_precision=0.5 * (precisions[0] + precisions[1]),
        macro_recall=0.5 * (recalls[0] + recalls[1]),
        precision_by_class=(precisions[0], precisions[1]),
        recall_by_class=(recalls[0], recalls[1]),
        threshold=threshold,
        n_test=len(labels),
    )


# --- randomized hyperparameter search -------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    """Candidate grid for randomized search; the defaults are the full tuning grid."""

    n_estimators: tuple[int, ...] = (10, 50, 100, 150, 200, 500, 1000)
    max_depth: tuple[int, ...] = (3, 4, 5, 6, 7, 8, 9, 10)
    min_child_weight: tuple[float, ...] = (1, 2, 3, 4, 5, 6)
    gamma: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    subsample: tuple[float, ...] = (0.6, 0.8, 1.0)
    colsample_bytree: tuple[float, ...] = (0.6, 0.7, 0.8, 0.9, 1.0)
    learning_rate: tuple[float, ...] = (0.01, 0.05, 0.1, 0.2, 0.3)

    _PARAM_ORDER = (
        "n_estimators",
        "max_depth",
        "min_child_weight",
        "gamma",
        "subsample",
        "colsample_bytree",
        "learning_rate",
    )

    def sample(self, rng: np.random.Generator, seed: int) -> Hyperparams:
        choices = {}
        for name in self._PARAM_ORDER:
            candidates = getattr(self, name)
            choices[name] = candidates[int(rng.integers(len(candidates)))]
        return Hyperparams(
            n_estimators=int(choices["n_estimators"]),
            max_depth=int(choices["max_depth"]),
            min_child_weight=float(choices["min_child_weight"]),
            gamma=float(choices["gamma"]),
            subsample=float(choices["subsample"]),
            colsample_bytree=float(choices["colsample_bytree"]),
            learning_rate=float(choices["learning_rate"]),
            seed=seed,
        )

    def contains(self, hp: Hyperparams) -> bool:
        return all(
            any(np.isclose(getattr(hp, name), c) for c in getattr(self, name))
            for name in self._PARAM_ORDER
        )

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in self._PARAM_ORDER}

    @classmethod
    def from_dict(cls, data: dict) -> "SearchSpace":
        unknown = set(data) - set(cls._PARAM_ORDER)
        if unknown:
            raise UsageError(f"unknown search-space keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) for k, v in data.items()})


@dataclass(frozen=True)
class SearchRecord:
    index: int
    params: Hyperparams
    validation_auc: float


@dataclass
class SearchResult:
    best: Hyperparams
    history: list[SearchRecord]

    def history_to_csv(self, path: str | Path) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        fields = list(SearchSpace._PARAM_ORDER)
        writer.writerow(["index", *fields, "seed", "validation_auc"])
        for rec in self.history:
            writer.writerow(
                [rec.index]
                + [getattr(rec.params, f) for f in fields]
                + [rec.params.seed, repr(rec.validation_auc)]
            )
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


_WORKER_DATA: dict = {}


def _evaluate_search_config(item: tuple[int, Hyperparams]) -> tuple[int, float]:
    index, hp = item
    X_inner, y_inner, X_val, y_val = _WORKER_DATA["search"]
    ensemble = train(X_inner, y_inner, hp)
    return index, auc(predict_proba(ensemble, X_val), y_val)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _inner_split(n: int, rng: np.random.Generator, validation_fraction: float) -> tuple[np.ndarray, np.ndarray]:
    permutation = rng.permutation(n)
    n_val = _round_half_up(validation_fraction * n)
    return permutation[n_val:], permutation[:n_val]


def random_search(
    train_matrix: FeatureMatrix,
    space: SearchSpace | None = None,
    n_iter: int = 50,
    seed: int = 0,
    validation_fraction: float = 0.30,
    n_jobs: int = 1,
) -> SearchResult:
    """Uniform sampling (with replacement) over the grid, selected by validation AUC.

    The input is split 70/30 into inner-train and validation; preprocessing is
    fitted on the inner-train rows only. Ties in AUC go to the earliest sampled
    configuration. Iterations may run in parallel; history order and the
    tie-break depend only on the sample index.
    """
    if n_iter < 1:
        raise UsageError("n_iter must be at least 1")
    space = space or SearchSpace()
    rng = np.random.default_rng(seed)
    n = train_matrix.n_rows
    if n < 10:
        raise DegenerateDataError("need at least 10 training rows to tune")

    y = train_matrix.target.astype(np.int64)
    inner_idx, val_idx = _inner_split(n, rng, validation_fraction)
    if len(set(y[val_idx])) < 2 or len(set(y[inner_idx])) < 2:
        inner_idx, val_idx = _inner_split(n, rng, validation_fraction)  # resample once
        if len(set(y[val_idx])) < 2 or len(set(y[inner_idx])) < 2:
            raise DegenerateDataError("inner validation split is single-class")

    configs = []
    for i in range(n_iter):
        hp = space.sample(rng, seed=int(rng.integers(2**31)))
        configs.append((i, hp))

    inner = train_matrix.subset(inner_idx)
    state = fit_preprocessor(inner)
    X_inner, _ = transform(state, inner)
    X_val, _ = transform(state, train_matrix.subset(val_idx))
    _WORKER_DATA["search"] = (X_inner, y[inner_idx], X_val, y[val_idx])
    try:
        if n_jobs > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                results = dict(pool.map(_evaluate_search_config, configs))
        else:
            results = dict(map(_evaluate_search_config, configs))
    finally:
        _WORKER_DATA.pop("search", None)

    history = [SearchRecord(i, hp, results[i]) for i, hp in configs]
    best = history[0]
    for record in history[1:]:
        if record.validation_auc > best.validation_auc:
            best = record
    return SearchResult(best=best.params, history=history)


# --- final models ---------------------------------------------------------------


@dataclass
class TrainedModel:
    """A fitted preprocessor and the ensemble trained on its output."""

    preprocessor: PreprocessorState
    ensemble: Ensemble
    name: str = "model"

    def to_json(self) -> str:
        return json.dumps(
            {
                "name": self.name,
                "preprocessor": json.loads(self.preprocessor.to_json()),
                "ensemble": json.loads(ensemble_to_json(self.ensemble)),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        data = json.loads(text)
        return cls(
            preprocessor=PreprocessorState.from_json(json.dumps(data["preprocessor"])),
            ensemble=ensemble_from_json(json.dumps(data["ensemble"])),
            name=data.get("name", "model"),
        )


def fit_final(train_matrix: FeatureMatrix, best: Hyperparams, name: str = "model") -> TrainedModel:
    """Refit preprocessing and the ensemble on the whole tuning split (inner + validation)."""
    state = fit_preprocessor(train_matrix)
    X, design_names = transform(state, train_matrix)
    ensemble = train(X, train_matrix.target.astype(np.int64), best, feature_names=design_names)
    return TrainedModel(preprocessor=state, ensemble=ensemble, name=name)


def predict_scores(model: TrainedModel, matrix: FeatureMatrix) -> np.ndarray:
    X, _ = transform(model.preprocessor, matrix)
    return predict_proba(model.ensemble, X)


def evaluate_model(model: TrainedModel, matrix: FeatureMatrix, threshold: float = 0.5) -> EvalReport:
    return classification_report(predict_scores(model, matrix), matrix.target.astype(np.int64), threshold)


# --- cross-application generalization --------------------------------------------


@dataclass
class AucMatrix:
    """AUC of each model (rows: training source) on each test set (columns)."""

    row_names: list[str]
    col_names: list[str]
    values: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["train_source", *self.col_names])
        for name, row in zip(self.row_names, self.values):
            writer.writerow([name, *[repr(float(v)) for v in row]])
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


def cross_application_matrix(
    models: Mapping[str, TrainedModel],
    test_sets: Mapping[str, FeatureMatrix],
) -> AucMatrix:
    """Score every model on every test set with the model's own preprocessor."""
    if not models or not test_sets:
        raise UsageError("need at least one model and one test set")
    row_names = list(models)
    col_names = list(test_sets)
    values = np.zeros((len(row_names), len(col_names)))
    for i, model_name in enumerate(row_names):
        for j, set_name in enumerate(col_names):
            matrix = test_sets[set_name]
            values[i, j] = auc(predict_scores(models[model_name], matrix), matrix.target.astype(np.int64))
    return AucMatrix(row_names=row_names, col_names=col_names, values=values)
