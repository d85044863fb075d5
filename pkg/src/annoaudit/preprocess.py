"""Train-fitted preprocessing into a fully finite dense design matrix.

Numeric columns: mean imputation then standard scaling (population std).
Categorical columns: a reserved missing category absorbs absent and unseen
tokens before one-hot encoding. All statistics come from the fitting matrix
alone, so nothing leaks from validation or test rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SchemaError
from .features import MISSING_TOKEN, NUMERIC, FeatureMatrix


@dataclass(frozen=True)
class PreprocessorState:
    """Immutable statistics fitted on a training matrix."""

    fitted_columns: tuple[tuple[str, str], ...]  # (name, kind) in schema order
    means: dict[str, float]
    stds: dict[str, float]
    categories: dict[str, tuple[str, ...]]  # per categorical column, MISSING_TOKEN last
    n_fitted_rows: int

    def design_columns(self) -> list[str]:
        """Output column names: numeric names, then one name per category token."""
        out: list[str] = []
        for name, kind in self.fitted_columns:
            if kind == NUMERIC:
                out.append(name)
            else:
                out.extend(f"{name}={token}" for token in self.categories[name])
        return out

    def design_source_features(self) -> list[str]:
        """Source feature of each design column (one-hot columns map back)."""
        out: list[str] = []
        for name, kind in self.fitted_columns:
            if kind == NUMERIC:
                out.append(name)
            else:
                out.extend([name] * len(self.categories[name]))
        return out

    def to_json(self) -> str:
        return json.dumps(
            {
                "fitted_columns": [[n, k] for n, k in self.fitted_columns],
                "means": self.means,
                "stds": self.stds,
                "categories": {k: list(v) for k, v in self.categories.items()},
                "n_fitted_rows": self.n_fitted_rows,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PreprocessorState":
        data = json.loads(text)
        return cls(
            fitted_columns=tuple((n, k) for n, k in data["fitted_columns"]),
            means={k: float(v) for k, v in data["means"].items()},
            stds={k: float(v) for k, v in data["stds"].items()},
            categories={k: tuple(v) for k, v in data["categories"].items()},
            n_fitted_rows=int(data["n_fitted_rows"]),
        )


def fit(train_matrix: FeatureMatrix) -> PreprocessorState:
    """Compute imputation, scaling, and category statistics from training rows only.

    Missing numeric cells are ignored when computing mean/std; an all-missing
    column records mean 0, and any zero or undefined std is recorded as 1 so
    the transform is always finite.
    """
    if train_matrix.n_rows == 0:
        raise SchemaError("cannot fit a preprocessor on an empty matrix")
    means: dict[str, float] = {}
    stds: dict[str, float] = {}
    categories: dict[str, tuple[str, ...]] = {}
    for name, kind in train_matrix.schema.columns:
        column = train_matrix.columns[name]
        if kind == NUMERIC:
            present = column[~np.isnan(column)]
            if len(present) == 0:
                means[name], stds[name] = 0.0, 1.0
            else:
                mean = float(np.mean(present))
                std = float(np.std(present))  # population std
                means[name] = mean
                stds[name] = std if std > 0.0 else 1.0
        else:
            tokens = sorted(set(str(v) for v in column) - {MISSING_TOKEN})
            categories[name] = tuple(tokens) + (MISSING_TOKEN,)
    return PreprocessorState(
        fitted_columns=train_matrix.schema.columns,
        means=means,
        stds=stds,
        categories=categories,
        n_fitted_rows=train_matrix.n_rows,
    )


def transform(state: PreprocessorState, matrix: FeatureMatrix) -> tuple[np.ndarray, list[str]]:
    """Densify a matrix with the fitted statistics; output has no missing cells.

    Numeric: impute the fitted mean, then (x - mean) / std. Categorical: tokens
    unseen at fit time fall into the missing category, then one-hot.
    """
    if matrix.schema.columns != state.fitted_columns:
        raise SchemaError("matrix schema does not match the fitted schema")
    n = matrix.n_rows
    design_names = state.design_columns()
    out = np.zeros((n, len(design_names)), dtype=np.float64)
    col = 0
    for name, kind in state.fitted_columns:
        if kind == NUMERIC:
            values = matrix.columns[name].astype(np.float64).copy()
            values[np.isnan(values)] = state.means[name]
            out[:, col] = (values - state.means[name]) / state.stds[name]
            col += 1
        else:
            tokens = state.categories[name]
            lookup = {token: i for i, token in enumerate(tokens)}
            missing_index = lookup[MISSING_TOKEN]
            indices = np.array(
                [lookup.get(str(v), missing_index) for v in matrix.columns[name]], dtype=np.int64
            )
            out[np.arange(n), col + indices] = 1.0
            col += len(tokens)
    if not np.isfinite(out).all():
        raise SchemaError("transform produced non-finite values")
    return out, design_names
