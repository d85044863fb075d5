"""Independent brute-force reference implementations used only by the tests.

Each oracle deliberately takes the slow, obvious route so it shares no code
with the production paths it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def dp_edit_distance(a: str, b: str) -> int:
    """Textbook full-table Levenshtein dynamic program."""
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        table[i][0] = i
    for j in range(m + 1):
        table[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            table[i][j] = min(table[i - 1][j] + 1, table[i][j - 1] + 1, table[i - 1][j - 1] + cost)
    return table[n][m]


def pairwise_auc(scores, labels) -> float:
    """O(n^2) positive/negative pair counting with half credit for ties."""
    scores = list(map(float, scores))
    labels = list(map(int, labels))
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def spearman(x, y) -> float:
    """Rank correlation via average ranks and Pearson on the ranks."""

    def ranks(values):
        values = np.asarray(values, dtype=np.float64)
        order = np.argsort(values, kind="stable")
        out = np.empty(len(values))
        i = 0
        sorted_vals = values[order]
        while i < len(values):
            j = i
            while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
                j += 1
            out[order[i : j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return out

    rx, ry = ranks(x), ranks(y)
    return float(np.corrcoef(rx, ry)[0, 1])


def trigram_vector(text: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for i in range(len(text) - 2):
        gram = text[i : i + 3]
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def trigram_cosine_distance(a: str, b: str) -> float:
    va, vb = trigram_vector(a), trigram_vector(b)
    if not va and not vb:
        return 0.0
    if not va or not vb:
        return 1.0
    dot = sum(va[g] * vb.get(g, 0) for g in va)
    na = math.sqrt(sum(c * c for c in va.values()))
    nb = math.sqrt(sum(c * c for c in vb.values()))
    return 1.0 - dot / (na * nb)


def confusion_matrix(scores, labels, threshold: float = 0.5) -> dict[str, int]:
    tp = fp = tn = fn = 0
    for s, y in zip(scores, labels):
        pred = 1 if float(s) >= threshold else 0
        if pred == 1 and y == 1:
            tp += 1
        elif pred == 1 and y == 0:
            fp += 1
        elif pred == 0 and y == 0:
            tn += 1
        else:
            fn += 1
    return {"tp": tp, "fp": fp, "tn": tn, "fn": fn}


def shapley_values_by_enumeration(value_fn, n_features: int) -> np.ndarray:
    """Exact Shapley values of a set function by full subset enumeration.

    value_fn maps a frozenset of feature indices to a real number.
    """
    phi = np.zeros(n_features)
    all_features = list(range(n_features))
    fact = math.factorial
    denom = fact(n_features)
    values: dict[frozenset, float] = {}

    def v(subset: frozenset) -> float:
        if subset not in values:
            values[subset] = value_fn(subset)
        return values[subset]

    for i in all_features:
        others = [f for f in all_features if f != i]
        for r in range(len(others) + 1):
            weight = fact(r) * fact(n_features - r - 1) / denom
            for combo in itertools.combinations(others, r):
                s = frozenset(combo)
                phi[i] += weight * (v(s | {i}) - v(s))
    return phi


def tree_conditional_expectation(tree, x: np.ndarray, subset: frozenset) -> float:
    """Cover-weighted expectation of a tree when only `subset` features are known."""

    def walk(node: int) -> float:
        if tree.feature[node] < 0:
            return float(tree.weight[node])
        f = int(tree.feature[node])
        left, right = int(tree.left[node]), int(tree.right[node])
        if f in subset:
            child = left if x[f] < tree.threshold[node] else right
            return walk(child)
        cl, cr = float(tree.cover[left]), float(tree.cover[right])
        parent = float(tree.cover[node])
        return (cl * walk(left) + cr * walk(right)) / parent

    return walk(0)


def rescan_feature_row(events, profiles, focal_index: int) -> dict[str, float]:
    """Quadratic re-scan of every history feature for one event.

    Recomputes each window from scratch with per-event masks over the whole
    log; shares no indexing machinery with the production matrix builder.
    """
    import numpy as np

    focal = events[focal_index]
    t = focal.timestamp
    ts = np.array([e.timestamp for e in events], dtype=np.int64)
    ann = np.array([e.annotator_id for e in events], dtype=object)
    app = np.array([e.application.value for e in events], dtype=object)
    err = np.array([e.annotator_label != e.audit_label for e in events], dtype=np.int64)
    maj = np.array([abs(int(e.annotator_label) - int(e.audit_label)) > 2 for e in events], dtype=np.int64)

    row: dict[str, float] = {}
    for w in (7, 14, 21, 28):
        in_window = (ts >= t - w * 86_400) & (ts < t)
        mine = in_window & (ann == focal.annotator_id)
        pooled = in_window & (app == focal.application.value)
        row[f"error_{w}"] = err[mine].sum() / mine.sum() if mine.any() else math.nan
        row[f"maj_error_{w}"] = maj[mine].sum() / mine.sum() if mine.any() else math.nan
        row[f"error_{w}_all"] = err[pooled].sum() / pooled.sum() if pooled.any() else math.nan
        row[f"maj_error_{w}_all"] = maj[pooled].sum() / pooled.sum() if pooled.any() else math.nan
        row[f"error_{w}_diff"] = row[f"error_{w}"] - row[f"error_{w}_all"]
        row[f"vol_last_{w}"] = float(mine.sum())

    prior_mine = (ts < t) & (ann == focal.annotator_id)
    row["tenure_full_days"] = float((t - ts[prior_mine].min()) // 86_400) if prior_mine.any() else 0.0
    profile = next(p for p in profiles if p.annotator_id == focal.annotator_id)
    row["tenure_updated_days"] = float((t - profile.join_date) // 86_400)
    row["qualification_trials"] = float(profile.qualification_trials)
    row["qualification_agreement_rate"] = float(profile.qualification_agreement_rate)

    for field_name, tag in (("output_media_type", "output_media_type"), ("input_query_type", "input_query_type_user")):
        value = getattr(focal, field_name)
        matching = [
            (e.timestamp, i)
            for i, e in enumerate(events)
            if e.annotator_id == focal.annotator_id and e.timestamp < t and getattr(e, field_name) == value
        ]
        matching.sort()
        for n in (1, 3, 5):
            if not matching:
                row[f"error_rolling_{tag}_{n}"] = math.nan
            else:
                recent = matching[-n:]
                correct = sum(1 - err[i] for _, i in recent)
                row[f"error_rolling_{tag}_{n}"] = correct / len(recent)

    row["in_out_edit_distance"] = float(dp_edit_distance(focal.input_text, focal.output_text))
    row["in_out_embedding_distance"] = trigram_cosine_distance(focal.input_text, focal.output_text)
    return row
