"""Second-order gradient-boosted decision trees for binary logistic loss.

Trees grow depth-wise with exact greedy split search: candidate thresholds are
midpoints of consecutive distinct feature values present in a node, a split is
accepted only when its gain is strictly positive and both children carry at
least min_child_weight of hessian. Learning rate is folded into leaf weights,
so an ensemble's margin is base_margin plus a plain sum over trees.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from numba import njit

from .errors import SchemaError, UsageError

_MAX_DEPTH_LIMIT = 20


@dataclass(frozen=True)
class Hyperparams:
    n_estimators: int = 100
    max_depth: int = 6
    min_child_weight: float = 1.0
    gamma: float = 0.0
    subsample: float = 1.0
    colsample_bytree: float = 1.0
    learning_rate: float = 0.1
    l2_lambda: float = 1.0
    base_score: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 0:
            raise UsageError("n_estimators must be non-negative")
        if not 1 <= self.max_depth <= _MAX_DEPTH_LIMIT:
            raise UsageError(f"max_depth must lie in [1, {_MAX_DEPTH_LIMIT}]")
        if self.min_child_weight < 0 or self.gamma < 0 or self.l2_lambda < 0:
            raise UsageError("min_child_weight, gamma, and l2_lambda must be non-negative")
        if not 0.0 < self.subsample <= 1.0 or not 0.0 < self.colsample_bytree <= 1.0:
            raise UsageError("subsample and colsample_bytree must lie in (0, 1]")
        if not 0.0 < self.learning_rate <= 1.0:
            raise UsageError("learning_rate must lie in (0, 1]")
        if not 0.0 < self.base_score < 1.0:
            raise UsageError("base_score must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparams":
        return cls(**data)


@dataclass
class Tree:
    """Array-of-struct tree; feature[i] < 0 marks a leaf. Accepted splits keep
    the gradient/hessian sums their gain was computed from."""

    feature: np.ndarray  # int32
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    weight: np.ndarray  # float64, leaf margin contribution (learning rate folded in)
    cover: np.ndarray  # float64, training weight reaching the node
    g_left: np.ndarray
    h_left: np.ndarray
    g_right: np.ndarray
    h_right: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def split_nodes(self) -> np.ndarray:
        return np.where(self.feature >= 0)[0]


@dataclass
class Ensemble:
    trees: list[Tree]
    base_margin: float
    hyperparams: Hyperparams
    n_features: int
    feature_names: list[str] | None = None
    cover_mode: str = "hessian"


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_grad_hess(p, y):
    """Gradient and hessian of the logistic loss at probability p: (p - y, p(1-p))."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    g = p - y
    h = p * (1.0 - p)
    if g.ndim == 0:
        return float(g), float(h)
    return g, h


def split_gain(g_left: float, h_left: float, g_right: float, h_right: float,
               l2_lambda: float, gamma: float) -> float:
    """Gain of a candidate split from its children's gradient/hessian sums."""
    return 0.5 * (
        g_left * g_left / (h_left + l2_lambda)
        + g_right * g_right / (h_right + l2_lambda)
        - (g_left + g_right) * (g_left + g_right) / (h_left + h_right + l2_lambda)
    ) - gamma


def leaf_weight(g_sum: float, h_sum: float, l2_lambda: float, learning_rate: float) -> float:
    """Optimal leaf value scaled by the learning rate: eta * (-G / (H + lambda))."""
    denom = h_sum + l2_lambda
    if denom <= 0.0:
        return 0.0
    return learning_rate * (-g_sum / denom)


@njit(cache=True)
def _grow_tree(
    bin_ids,  # (f, n) int32: per feature, each row's index into its distinct values
    bin_starts,  # (f+1,) int64 offsets into bin_values
    bin_values,  # concatenated sorted distinct values per feature
    g,
    h,
    sample_rows,  # int64, ascending
    sample_cols,  # int64, ascending
    max_depth,
    min_child_weight,
    lam,
    gamma,
    eta,
    cover_counts,  # 1 -> cover is a row count, else hessian sum
    feature,
    threshold,
    left,
    right,
    weight,
    cover,
    out_gl,
    out_hl,
    out_gr,
    out_hr,
    out_gain,
    node_of,  # (n,) int32 scratch
):
    n_sample = sample_rows.shape[0]
    max_bins = 0
    for j in range(bin_starts.shape[0] - 1):
        width = bin_starts[j + 1] - bin_starts[j]
        if width > max_bins:
            max_bins = width
    hist_g = np.zeros(max_bins, dtype=np.float64)
    hist_h = np.zeros(max_bins, dtype=np.float64)
    hist_c = np.zeros(max_bins, dtype=np.int64)
    touched = np.empty(max_bins, dtype=np.int64)
    present = np.empty(max_bins, dtype=np.int64)
    row_order = np.empty(n_sample, dtype=np.int64)

    for i in range(n_sample):
        node_of[sample_rows[i]] = 0
    n_nodes = 1
    level_start = 0
    level_end = 1

    for depth in range(max_depth + 1):
        n_level = level_end - level_start
        if n_level == 0:
            break
        # group sampled rows by node (counting sort)
        seg_count = np.zeros(n_level + 1, dtype=np.int64)
        node_g = np.zeros(n_level, dtype=np.float64)
        node_h = np.zeros(n_level, dtype=np.float64)
        for i in range(n_sample):
            r = sample_rows[i]
            v = node_of[r]
            if v >= level_start:
                q = v - level_start
                seg_count[q + 1] += 1
                node_g[q] += g[r]
                node_h[q] += h[r]
        seg_start = np.empty(n_level + 1, dtype=np.int64)
        seg_start[0] = 0
        for q in range(n_level):
            seg_start[q + 1] = seg_start[q] + seg_count[q + 1]
        cursor = seg_start[:-1].copy()
        for i in range(n_sample):
            r = sample_rows[i]
            v = node_of[r]
            if v >= level_start:
                q = v - level_start
                row_order[cursor[q]] = r
                cursor[q] += 1

        for q in range(n_level):
            v = level_start + q
            rows_lo = seg_start[q]
            rows_hi = seg_start[q + 1]
            n_rows = rows_hi - rows_lo
            if cover_counts == 1:
                cover[v] = float(n_rows)
            else:
                cover[v] = node_h[q]

            best_gain = 0.0
            best_feature = -1
            best_thr = 0.0
            best_gl = 0.0
            best_hl = 0.0
            best_gr = 0.0
            best_hr = 0.0
            if depth < max_depth and n_rows >= 2:
                for jj in range(sample_cols.shape[0]):
                    j = sample_cols[jj]
                    offset = bin_starts[j]
                    n_bins = bin_starts[j + 1] - offset
                    if n_bins < 2:
                        continue
                    t_count = 0
                    for i in range(rows_lo, rows_hi):
                        r = row_order[i]
                        b = bin_ids[j, r]
                        if hist_c[b] == 0:
                            touched[t_count] = b
                            t_count += 1
                        hist_c[b] += 1
                        hist_g[b] += g[r]
                        hist_h[b] += h[r]
                    # present bins in ascending order
                    if t_count * 8 < n_bins:
                        present[:t_count] = np.sort(touched[:t_count])
                        m = t_count
                    else:
                        m = 0
                        for b in range(n_bins):
                            if hist_c[b] > 0:
                                present[m] = b
                                m += 1
                    gl = 0.0
                    hl = 0.0
                    for k in range(m - 1):
                        b = present[k]
                        gl += hist_g[b]
                        hl += hist_h[b]
                        gr = node_g[q] - gl
                        hr = node_h[q] - hl
                        if hl < min_child_weight or hr < min_child_weight:
                            continue
                        if hl + lam <= 0.0 or hr + lam <= 0.0:
                            continue
                        gain = 0.5 * (
                            gl * gl / (hl + lam)
                            + gr * gr / (hr + lam)
                            - (gl + gr) * (gl + gr) / (hl + hr + lam)
                        ) - gamma
                        if gain > best_gain:
                            v1 = bin_values[offset + b]
                            v2 = bin_values[offset + present[k + 1]]
                            thr = 0.5 * (v1 + v2)
                            if thr <= v1:  # midpoint collapsed onto the lower value
                                thr = v2
                            best_gain = gain
                            best_feature = j
                            best_thr = thr
                            best_gl = gl
                            best_hl = hl
                            best_gr = gr
                            best_hr = hr
                    for k in range(t_count):
                        b = touched[k]
                        hist_c[b] = 0
                        hist_g[b] = 0.0
                        hist_h[b] = 0.0

            if best_feature >= 0:
                child_left = n_nodes
                child_right = n_nodes + 1
                n_nodes += 2
                feature[v] = best_feature
                threshold[v] = best_thr
                left[v] = child_left
                right[v] = child_right
                weight[v] = 0.0
                out_gl[v] = best_gl
                out_hl[v] = best_hl
                out_gr[v] = best_gr
                out_hr[v] = best_hr
                out_gain[v] = best_gain
                offset = bin_starts[best_feature]
                for i in range(rows_lo, rows_hi):
                    r = row_order[i]
                    value = bin_values[offset + bin_ids[best_feature, r]]
                    node_of[r] = child_left if value < best_thr else child_right
            else:
                feature[v] = -1
                left[v] = -1
                right[v] = -1
                denom = node_h[q] + lam
                weight[v] = eta * (-node_g[q] / denom) if denom > 0.0 else 0.0
        level_start = level_end
        level_end = n_nodes
    return n_nodes


@njit(cache=True)
def _route_add(X, feature, threshold, left, right, weight, out):
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += weight[node]


def _validate_xy(X: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise UsageError("X must be a non-empty 2-D matrix")
    if not np.isfinite(X).all():
        raise UsageError("X must be finite; resolve missing values upstream")
    if y is not None:
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise UsageError("y must align with the rows of X")
        if not set(np.unique(y.astype(np.float64))) <= {0.0, 1.0}:
            raise UsageError("targets must be binary 0/1")
    return X


def train(
    X: np.ndarray,
    y: Sequence[int] | np.ndarray,
    hp: Hyperparams,
    feature_names: Sequence[str] | None = None,
    cover_mode: str = "hessian",
) -> Ensemble:
    """Boost n_estimators trees against the logistic loss; deterministic per (X, y, hp)."""
    X = _validate_xy(X, np.asarray(y))
    y = np.asarray(y, dtype=np.float64)
    if cover_mode not in ("hessian", "count"):
        raise UsageError("cover_mode must be 'hessian' or 'count'")
    if feature_names is not None and len(feature_names) != X.shape[1]:
        raise SchemaError("feature_names must match the number of columns")
    n, f = X.shape

    bin_id_rows = []
    values_parts: list[np.ndarray] = []
    starts = np.zeros(f + 1, dtype=np.int64)
    for j in range(f):
        uniques, inverse = np.unique(X[:, j], return_inverse=True)
        values_parts.append(uniques)
        bin_id_rows.append(inverse.astype(np.int32))
        starts[j + 1] = starts[j] + len(uniques)
    bin_ids = np.ascontiguousarray(np.stack(bin_id_rows)) if f else np.zeros((0, n), dtype=np.int32)
    bin_values = np.concatenate(values_parts) if values_parts else np.zeros(0)

    base_margin = logit(hp.base_score)
    margins = np.full(n, base_margin, dtype=np.float64)
    rng = np.random.default_rng(hp.seed)
    n_sub = max(1, int(round(hp.subsample * n)))
    f_sub = max(1, int(round(hp.colsample_bytree * f)))
    max_nodes = 2 ** (hp.max_depth + 1) - 1
    node_of = np.full(n, -1, dtype=np.int32)

    trees: list[Tree] = []
    for _ in range(hp.n_estimators):
        p = _sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        rows = np.sort(rng.choice(n, size=n_sub, replace=False)) if n_sub < n else np.arange(n)
        cols = np.sort(rng.choice(f, size=f_sub, replace=False)) if f_sub < f else np.arange(f)

        feature = np.full(max_nodes, -1, dtype=np.int32)
        threshold = np.zeros(max_nodes, dtype=np.float64)
        left = np.full(max_nodes, -1, dtype=np.int32)
        right = np.full(max_nodes, -1, dtype=np.int32)
        weight = np.zeros(max_nodes, dtype=np.float64)
        cover = np.zeros(max_nodes, dtype=np.float64)
        stats = [np.full(max_nodes, np.nan, dtype=np.float64) for _ in range(5)]
        n_nodes = _grow_tree(
            bin_ids,
            starts,
            bin_values,
            g,
            h,
            rows.astype(np.int64),
            cols.astype(np.int64),
            hp.max_depth,
            float(hp.min_child_weight),
            float(hp.l2_lambda),
            float(hp.gamma),
            float(hp.learning_rate),
            1 if cover_mode == "count" else 0,
            feature,
            threshold,
            left,
            right,
            weight,
            cover,
            *stats,
            node_of,
        )
        tree = Tree(
            feature=feature[:n_nodes].copy(),
            threshold=threshold[:n_nodes].copy(),
            left=left[:n_nodes].copy(),
            right=right[:n_nodes].copy(),
            weight=weight[:n_nodes].copy(),
            cover=cover[:n_nodes].copy(),
            g_left=stats[0][:n_nodes].copy(),
            h_left=stats[1][:n_nodes].copy(),
            g_right=stats[2][:n_nodes].copy(),
            h_right=stats[3][:n_nodes].copy(),
            gain=stats[4][:n_nodes].copy(),
        )
        trees.append(tree)
        _route_add(X, tree.feature, tree.threshold, tree.left, tree.right, tree.weight, margins)

    return Ensemble(
        trees=trees,
        base_margin=base_margin,
        hyperparams=hp,
        n_features=f,
        feature_names=list(feature_names) if feature_names is not None else None,
        cover_mode=cover_mode,
    )


def predict_margin(ensemble: Ensemble, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
    """Additive margin: base_margin plus the first n_trees trees (all by default)."""
    X = _validate_xy(X)
    if X.shape[1] != ensemble.n_features:
        raise SchemaError(
            f"X has {X.shape[1]} features but the ensemble was trained on {ensemble.n_features}"
        )
    used = ensemble.trees if n_trees is None else ensemble.trees[:n_trees]
    out = np.full(X.shape[0], ensemble.base_margin, dtype=np.float64)
    for tree in used:
        _route_add(X, tree.feature, tree.threshold, tree.left, tree.right, tree.weight, out)
    return out


def predict_proba(ensemble: Ensemble, X: np.ndarray, n_trees: int | None = None) -> np.ndarray:
    return _sigmoid(predict_margin(ensemble, X, n_trees))


def log_loss(probabilities: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(np.asarray(probabilities, dtype=np.float64), 1e-15, 1.0 - 1e-15)
    y = np.asarray(y, dtype=np.float64)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


# --- serialization -------------------------------------------------------------


def _optional_list(values: np.ndarray, keep: np.ndarray) -> list:
    return [float(v) if k else None for v, k in zip(values, keep)]


def ensemble_to_json(ensemble: Ensemble) -> str:
    payload = {
        "base_margin": ensemble.base_margin,
        "hyperparams": ensemble.hyperparams.to_dict(),
        "n_features": ensemble.n_features,
        "feature_names": ensemble.feature_names,
        "cover_mode": ensemble.cover_mode,
        "trees": [],
    }
    for tree in ensemble.trees:
        is_split = tree.feature >= 0
        payload["trees"].append(
            {
                "feature": tree.feature.tolist(),
                "threshold": [float(t) if s else None for t, s in zip(tree.threshold, is_split)],
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "weight": [None if s else float(w) for w, s in zip(tree.weight, is_split)],
                "cover": tree.cover.tolist(),
                "g_left": _optional_list(tree.g_left, is_split),
                "h_left": _optional_list(tree.h_left, is_split),
                "g_right": _optional_list(tree.g_right, is_split),
                "h_right": _optional_list(tree.h_right, is_split),
                "gain": _optional_list(tree.gain, is_split),
            }
        )
    return json.dumps(payload, indent=2)


def ensemble_from_json(text: str) -> Ensemble:
    data = json.loads(text)
    trees = []
    for record in data["trees"]:
        n_nodes = len(record["feature"])

        def dense(key: str, fill: float = np.nan) -> np.ndarray:
            return np.array([fill if v is None else float(v) for v in record[key]], dtype=np.float64)

        trees.append(
            Tree(
                feature=np.asarray(record["feature"], dtype=np.int32),
                threshold=dense("threshold", 0.0),
                left=np.asarray(record["left"], dtype=np.int32),
                right=np.asarray(record["right"], dtype=np.int32),
                weight=dense("weight", 0.0),
                cover=np.asarray(record["cover"], dtype=np.float64),
                g_left=dense("g_left"),
                h_left=dense("h_left"),
                g_right=dense("g_right"),
                h_right=dense("h_right"),
                gain=dense("gain"),
            )
        )
        if n_nodes == 0:
            raise SchemaError("serialized tree has no nodes")
    return Ensemble(
        trees=trees,
        base_margin=float(data["base_margin"]),
        hyperparams=Hyperparams.from_dict(data["hyperparams"]),
        n_features=int(data["n_features"]),
        feature_names=data["feature_names"],
        cover_mode=data.get("cover_mode", "hessian"),
    )
