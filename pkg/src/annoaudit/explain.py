"""Exact SHAP attributions for tree ensembles, with feature-level importances.

Attributions are Shapley values of the ensemble margin under the cover-weighted
conditional expectation: descending a tree, a feature outside the conditioning
set splits expectation across both children in proportion to their training
covers. Computed in polynomial time per (row, tree) with the extend/unwind
path algorithm; a brute-force subset enumeration pins down correctness in the
test suite.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .errors import DegenerateDataError, SchemaError, UsageError
from .gbdt import Ensemble, Tree, _validate_xy


@dataclass
class ShapMatrix:
    """Per-row, per-feature attributions on the margin scale.

    base_value + values[i].sum() equals the model margin of row i.
    """

    values: np.ndarray  # (rows, features)
    base_value: float
    feature_names: list[str]

    def to_csv(self, path: str | Path) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["base_value", repr(self.base_value)])
        writer.writerow(self.feature_names)
        for row in self.values:
            writer.writerow([repr(float(v)) for v in row])
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


@dataclass
class ImportanceVector:
    """Mean absolute SHAP per source feature, ranked by magnitude."""

    names: list[str]  # descending importance
    values: np.ndarray
    cumulative: np.ndarray

    def as_mapping(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(self.names, self.values)}

    def to_csv(self, path: str | Path) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["feature", "mean_abs_shap", "cumulative"])
        for name, value, cum in zip(self.names, self.values, self.cumulative):
            writer.writerow([name, repr(float(value)), repr(float(cum))])
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


@njit(cache=True)
def _extend(pd, pz, po, pw, base, length, zero_fraction, one_fraction, feature_index):
    pd[base + length] = feature_index
    pz[base + length] = zero_fraction
    po[base + length] = one_fraction
    pw[base + length] = 1.0 if length == 0 else 0.0
    for i in range(length - 1, -1, -1):
        pw[base + i + 1] += one_fraction * pw[base + i] * (i + 1) / (length + 1)
        pw[base + i] = zero_fraction * pw[base + i] * (length - i) / (length + 1)


@njit(cache=True)
def _unwind(pd, pz, po, pw, base, length, k):
    one_fraction = po[base + k]
    zero_fraction = pz[base + k]
    carry = pw[base + length - 1]
    for j in range(length - 2, -1, -1):
        if one_fraction != 0.0:
            kept = pw[base + j]
            pw[base + j] = carry * length / ((j + 1) * one_fraction)
            carry = kept - pw[base + j] * zero_fraction * (length - 1 - j) / length
        else:
            pw[base + j] = pw[base + j] * length / (zero_fraction * (length - 1 - j))
    for j in range(k, length - 1):
        pd[base + j] = pd[base + j + 1]
        pz[base + j] = pz[base + j + 1]
        po[base + j] = po[base + j + 1]


@njit(cache=True)
def _unwound_sum(pd, pz, po, pw, base, length, k) -> float:
    one_fraction = po[base + k]
    zero_fraction = pz[base + k]
    carry = pw[base + length - 1]
    total = 0.0
    for j in range(length - 2, -1, -1):
        if one_fraction != 0.0:
            part = carry * length / ((j + 1) * one_fraction)
            total += part
            carry = pw[base + j] - part * zero_fraction * (length - 1 - j) / length
        else:
            total += pw[base + j] * length / (zero_fraction * (length - 1 - j))
    return total


@njit(cache=True)
def _tree_shap_rows(feature, threshold, left, right, weight, cover, stride, X, phi):
    """Accumulate one tree's attributions for every row of X into phi."""
    n_levels = stride  # recursion depth is bounded by path length
    pd = np.empty(n_levels * stride, dtype=np.int64)
    pz = np.empty(n_levels * stride, dtype=np.float64)
    po = np.empty(n_levels * stride, dtype=np.float64)
    pw = np.empty(n_levels * stride, dtype=np.float64)
    cap = 4 * stride + 8
    st_node = np.empty(cap, dtype=np.int64)
    st_level = np.empty(cap, dtype=np.int64)
    st_plen = np.empty(cap, dtype=np.int64)
    st_pz = np.empty(cap, dtype=np.float64)
    st_po = np.empty(cap, dtype=np.float64)
    st_pf = np.empty(cap, dtype=np.int64)

    for row in range(X.shape[0]):
        top = 0
        st_node[top] = 0
        st_level[top] = 0
        st_plen[top] = 0
        st_pz[top] = 1.0
        st_po[top] = 1.0
        st_pf[top] = -1
        top += 1
        while top > 0:
            top -= 1
            node = st_node[top]
            level = st_level[top]
            length = st_plen[top]
            parent_zero = st_pz[top]
            parent_one = st_po[top]
            parent_feature = st_pf[top]

            base = level * stride
            if level > 0:
                prev = (level - 1) * stride
                for i in range(length):
                    pd[base + i] = pd[prev + i]
                    pz[base + i] = pz[prev + i]
                    po[base + i] = po[prev + i]
                    pw[base + i] = pw[prev + i]
            _extend(pd, pz, po, pw, base, length, parent_zero, parent_one, parent_feature)
            length += 1

            if feature[node] < 0:
                leaf_value = weight[node]
                for i in range(1, length):
                    w_sum = _unwound_sum(pd, pz, po, pw, base, length, i)
                    phi[row, pd[base + i]] += w_sum * (po[base + i] - pz[base + i]) * leaf_value
            else:
                split_feature = feature[node]
                hot = left[node] if X[row, split_feature] < threshold[node] else right[node]
                cold = right[node] if hot == left[node] else left[node]
                hot_fraction = cover[hot] / cover[node]
                cold_fraction = cover[cold] / cover[node]
                incoming_zero = 1.0
                incoming_one = 1.0
                found = -1
                for i in range(length):
                    if pd[base + i] == split_feature:
                        found = i
                        break
                if found >= 0:
                    incoming_zero = pz[base + found]
                    incoming_one = po[base + found]
                    _unwind(pd, pz, po, pw, base, length, found)
                    length -= 1
                st_node[top] = cold
                st_level[top] = level + 1
                st_plen[top] = length
                st_pz[top] = cold_fraction * incoming_zero
                st_po[top] = 0.0
                st_pf[top] = split_feature
                top += 1
                st_node[top] = hot
                st_level[top] = level + 1
                st_plen[top] = length
                st_pz[top] = hot_fraction * incoming_zero
                st_po[top] = incoming_one
                st_pf[top] = split_feature
                top += 1


def _tree_depth(tree: Tree) -> int:
    depth = np.zeros(tree.n_nodes, dtype=np.int64)
    deepest = 0
    for node in range(tree.n_nodes):
        if tree.feature[node] >= 0:
            for child in (int(tree.left[node]), int(tree.right[node])):
                depth[child] = depth[node] + 1
                deepest = max(deepest, int(depth[child]))
    return deepest


def _check_covers(ensemble: Ensemble) -> None:
    for tree in ensemble.trees:
        if len(tree.cover) != tree.n_nodes or not np.isfinite(tree.cover).all():
            raise SchemaError("ensemble lacks cover statistics for SHAP")
        if tree.n_nodes and float(tree.cover[0]) <= 0 and (tree.feature >= 0).any():
            raise SchemaError("ensemble lacks usable cover statistics for SHAP")
        for v in tree.split_nodes():
            if tree.cover[tree.left[v]] <= 0 or tree.cover[tree.right[v]] <= 0 or tree.cover[v] <= 0:
                raise SchemaError("ensemble has non-positive covers at a split")


def root_expectation(tree: Tree) -> float:
    """Cover-weighted expectation of a tree with nothing conditioned on."""

    def walk(node: int) -> float:
        if tree.feature[node] < 0:
            return float(tree.weight[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        cl, cr = float(tree.cover[left]), float(tree.cover[right])
        return (cl * walk(left) + cr * walk(right)) / float(tree.cover[node])

    return walk(0)


def shap_values(ensemble: Ensemble, X: np.ndarray) -> ShapMatrix:
    """Exact per-row attributions of the ensemble margin; additive across trees."""
    X = _validate_xy(X)
    if X.shape[1] != ensemble.n_features:
        raise SchemaError(
            f"X has {X.shape[1]} features but the ensemble was trained on {ensemble.n_features}"
        )
    _check_covers(ensemble)
    phi = np.zeros((X.shape[0], ensemble.n_features), dtype=np.float64)
    base = ensemble.base_margin
    for tree in ensemble.trees:
        base += root_expectation(tree)
        if tree.n_nodes == 1:
            continue  # a lone leaf contributes only to the base value
        stride = _tree_depth(tree) + 2
        _tree_shap_rows(
            tree.feature, tree.threshold, tree.left, tree.right, tree.weight, tree.cover,
            stride, X, phi,
        )
    names = ensemble.feature_names or [f"f{j}" for j in range(ensemble.n_features)]
    return ShapMatrix(values=phi, base_value=float(base), feature_names=list(names))


def importance(shap: ShapMatrix, one_hot_map: Mapping[str, str]) -> ImportanceVector:
    """Mean |SHAP| per source feature, one-hot columns summed back before the abs.

    one_hot_map sends each design column to its source feature; every column
    must be mapped.
    """
    unmapped = [name for name in shap.feature_names if name not in one_hot_map]
    if unmapped:
        raise UsageError(f"unmapped design columns: {unmapped[:5]}")
    sources: dict[str, list[int]] = {}
    for j, name in enumerate(shap.feature_names):
        sources.setdefault(one_hot_map[name], []).append(j)
    totals = {
        source: float(np.mean(np.abs(shap.values[:, cols].sum(axis=1))))
        for source, cols in sources.items()
    }
    ranked = sorted(totals, key=lambda name: (-totals[name], name))
    values = np.array([totals[name] for name in ranked])
    return ImportanceVector(names=ranked, values=values, cumulative=np.cumsum(values))


def importance_correlation(a: ImportanceVector, b: ImportanceVector) -> float:
    """Pearson correlation of two importance vectors over their shared features."""
    shared = sorted(set(a.names) & set(b.names))
    if len(shared) < 3:
        raise DegenerateDataError("need at least 3 shared features to correlate")
    map_a, map_b = a.as_mapping(), b.as_mapping()
    va = np.array([map_a[name] for name in shared])
    vb = np.array([map_b[name] for name in shared])
    if va.std() == 0 or vb.std() == 0:
        raise DegenerateDataError("importance vectors have zero variance on shared features")
    return float(np.corrcoef(va, vb)[0, 1])


def correlation_matrix(importances: Mapping[str, ImportanceVector]) -> "tuple[list[str], np.ndarray]":
    names = list(importances)
    values = np.eye(len(names))
    for i, a in enumerate(names):
        for j, b in enumerate(names):
            if i < j:
                r = importance_correlation(importances[a], importances[b])
                values[i, j] = r
                values[j, i] = r
    return names, values


def correlation_to_csv(names: Sequence[str], values: np.ndarray, path: str | Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", *names])
    for name, row in zip(names, values):
        writer.writerow([name, *[repr(float(v)) for v in row]])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def importances_to_csv(importances: Mapping[str, ImportanceVector], path: str | Path) -> None:
    """One row per feature, one column per model (features sorted by name)."""
    model_names = list(importances)
    feature_names = sorted({name for vec in importances.values() for name in vec.names})
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", *model_names])
    for feature_name in feature_names:
        row = [feature_name]
        for model in model_names:
            value = importances[model].as_mapping().get(feature_name)
            row.append("" if value is None else repr(value))
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
