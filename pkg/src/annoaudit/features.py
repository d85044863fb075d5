"""Behavioral feature engineering over audited annotation logs.

Every feature of a focal task is computed from events strictly earlier than the
task's timestamp (windows are half-open: [t - N days, t)), so nothing about the
focal audit outcome leaks into its own feature row except the training target.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from numba import njit

from .errors import LogValidationError, ParseError, SchemaError, UsageError
from .events import AnnotationEvent, derive_verdict
from .synth import AnnotatorProfile

WINDOW_DAYS = (7, 14, 21, 28)
WINDOW_TASKS = (1, 3, 5)
MISSING = float("nan")
MISSING_TOKEN = "__missing__"

NUMERIC = "numeric"
CATEGORICAL = "categorical"


def default_columns() -> tuple[tuple[str, str], ...]:
    """The full feature set: one or more columns per behavioral feature family."""
    cols: list[tuple[str, str]] = [
        ("input_occurrences", NUMERIC),
        ("input_conversion_rate", NUMERIC),
        ("in_out_embedding_distance", NUMERIC),
        ("in_out_edit_distance", NUMERIC),
        ("input_media_type", CATEGORICAL),
        ("output_media_type", CATEGORICAL),
        ("input_misspelled", NUMERIC),
        ("input_language", CATEGORICAL),
        ("input_query_type", CATEGORICAL),
    ]
    for n in WINDOW_DAYS:
        cols.append((f"error_{n}", NUMERIC))
    for n in WINDOW_DAYS:
        cols.append((f"error_{n}_all", NUMERIC))
    for n in WINDOW_DAYS:
        cols.append((f"error_{n}_diff", NUMERIC))
    for n in WINDOW_DAYS:
        cols.append((f"maj_error_{n}", NUMERIC))
    for n in WINDOW_DAYS:
        cols.append((f"maj_error_{n}_all", NUMERIC))
    for n in WINDOW_DAYS:
        cols.append((f"vol_last_{n}", NUMERIC))
    cols += [
        ("tenure_full_days", NUMERIC),
        ("tenure_updated_days", NUMERIC),
        ("qualification_trials", NUMERIC),
        ("qualification_agreement_rate", NUMERIC),
    ]
    for n in WINDOW_TASKS:
        cols.append((f"error_rolling_output_media_type_{n}", NUMERIC))
    for n in WINDOW_TASKS:
        cols.append((f"error_rolling_input_query_type_user_{n}", NUMERIC))
    cols += [
        ("nth_task_in_session", NUMERIC),
        ("seconds_into_session", NUMERIC),
        ("answer_value", CATEGORICAL),
        ("time_on_task", NUMERIC),
        ("comment_length", NUMERIC),
        ("storefront_name", CATEGORICAL),
        ("application", CATEGORICAL),
    ]
    return tuple(cols)


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[tuple[str, str], ...] = field(default_factory=default_columns)
    window_days: tuple[int, ...] = WINDOW_DAYS
    window_tasks: tuple[int, ...] = WINDOW_TASKS

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        for _, kind in self.columns:
            if kind not in (NUMERIC, CATEGORICAL):
                raise SchemaError(f"unknown feature kind {kind!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    def kind_of(self, name: str) -> str:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise SchemaError(f"unknown feature {name!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "columns": [{"name": n, "kind": k} for n, k in self.columns],
                "window_days": list(self.window_days),
                "window_tasks": list(self.window_tasks),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        data = json.loads(text)
        return cls(
            columns=tuple((c["name"], c["kind"]) for c in data["columns"]),
            window_days=tuple(data["window_days"]),
            window_tasks=tuple(data["window_tasks"]),
        )


@dataclass
class FeatureMatrix:
    """Schema-typed columns aligned with task_ids; target is the audit verdict."""

    schema: FeatureSchema
    task_ids: list[str]
    columns: dict[str, np.ndarray]
    target: np.ndarray

    def __post_init__(self):
        n = len(self.task_ids)
        if len(self.target) != n:
            raise SchemaError("target length does not match row count")
        for name in self.schema.names:
            if name not in self.columns:
                raise SchemaError(f"column {name!r} missing from matrix")
            if len(self.columns[name]) != n:
                raise SchemaError(f"column {name!r} has wrong length")

    @property
    def n_rows(self) -> int:
        return len(self.task_ids)

    def subset(self, indices: np.ndarray) -> "FeatureMatrix":
        indices = np.asarray(indices)
        return FeatureMatrix(
            schema=self.schema,
            task_ids=[self.task_ids[i] for i in indices],
            columns={name: col[indices] for name, col in self.columns.items()},
            target=self.target[indices],
        )

    def select_ids(self, ids: Sequence[str]) -> "FeatureMatrix":
        wanted = set(ids)
        indices = np.array([i for i, t in enumerate(self.task_ids) if t in wanted], dtype=np.int64)
        return self.subset(indices)

    def rows_for_application(self, application: str) -> np.ndarray:
        return np.where(self.columns["application"] == application)[0]

    def to_csv(self, path: str | Path) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["task_id", *self.schema.names, "is_error"])
        kinds = dict(self.schema.columns)
        for i in range(self.n_rows):
            row = [self.task_ids[i]]
            for name in self.schema.names:
                value = self.columns[name][i]
                if kinds[name] == NUMERIC:
                    row.append("" if math.isnan(float(value)) else repr(float(value)))
                else:
                    row.append(str(value))
            row.append("true" if bool(self.target[i]) else "false")
            writer.writerow(row)
        Path(path).write_text(buf.getvalue(), encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path, schema: FeatureSchema) -> "FeatureMatrix":
        path = Path(path)
        kinds = dict(schema.columns)
        task_ids: list[str] = []
        raw: dict[str, list] = {name: [] for name in schema.names}
        target: list[bool] = []
        with path.open(encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            expected = ["task_id", *schema.names, "is_error"]
            if reader.fieldnames != expected:
                raise ParseError(f"{path.name}: header does not match the feature schema")
            for lineno, row in enumerate(reader, start=2):
                task_ids.append(row["task_id"])
                for name in schema.names:
                    cell = row[name]
                    if kinds[name] == NUMERIC:
                        raw[name].append(MISSING if cell == "" else float(cell))
                    else:
                        raw[name].append(cell)
                if row["is_error"] not in ("true", "false"):
                    raise ParseError(f"{path.name}:{lineno}: is_error must be true/false")
                target.append(row["is_error"] == "true")
        columns = {
            name: (
                np.asarray(raw[name], dtype=np.float64)
                if kinds[name] == NUMERIC
                else np.asarray(raw[name], dtype=object)
            )
            for name in schema.names
        }
        return cls(schema=schema, task_ids=task_ids, columns=columns, target=np.asarray(target, dtype=bool))


# --- text similarity ----------------------------------------------------------


@njit(cache=True)
def _levenshtein(a: np.ndarray, b: np.ndarray) -> int:
    n = a.shape[0]
    m = b.shape[0]
    if n == 0:
        return m
    if m == 0:
        return n
    prev = np.empty(m + 1, dtype=np.int64)
    cur = np.empty(m + 1, dtype=np.int64)
    for j in range(m + 1):
        prev[j] = j
    for i in range(1, n + 1):
        cur[0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            if prev[j - 1] + cost < best:
                best = prev[j - 1] + cost
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def _codepoints(text: str) -> np.ndarray:
    return np.array([ord(c) for c in text], dtype=np.int32)


def edit_distance(a: str, b: str) -> int:
    """Unit-cost Levenshtein distance over Unicode scalar values."""
    return int(_levenshtein(_codepoints(a), _codepoints(b)))


def trigram_vector(text: str) -> dict[str, float]:
    """Counts of contiguous character trigrams; empty for strings shorter than 3."""
    counts: dict[str, float] = {}
    for i in range(len(text) - 2):
        gram = text[i : i + 3]
        counts[gram] = counts.get(gram, 0.0) + 1.0
    return counts


def embedding_distance(
    a: str,
    b: str,
    embedder: Callable[[str], Mapping[str, float]] = trigram_vector,
) -> float:
    """1 - cosine similarity of the embedder's sparse vectors (trigram counts by default).

    Two zero vectors are identical (distance 0); a zero vector against a
    non-zero one is maximally distant (1).
    """
    va, vb = embedder(a), embedder(b)
    if not va and not vb:
        return 0.0
    if not va or not vb:
        return 1.0
    dot = sum(weight * vb.get(gram, 0.0) for gram, weight in va.items())
    norm_a = math.sqrt(sum(w * w for w in va.values()))
    norm_b = math.sqrt(sum(w * w for w in vb.values()))
    return 1.0 - dot / (norm_a * norm_b)


# --- point-wise rolling features (direct scans) --------------------------------


def rolling_error_rate(
    events: Sequence[AnnotationEvent],
    annotator_id: str,
    t: int,
    window_days: int,
    scope: str = "self",
    severity: str = "any",
    application: str | None = None,
) -> float:
    """Share of errors among audited events in [t - window_days days, t).

    scope="self" restricts to the annotator; scope="all" pools every annotator
    in the given application (the focal annotator included). Returns MISSING
    (NaN) when the window holds no events.
    """
    if window_days not in WINDOW_DAYS:
        raise UsageError(f"window_days must be one of {WINDOW_DAYS}")
    if scope not in ("self", "all"):
        raise UsageError("scope must be 'self' or 'all'")
    if severity not in ("any", "major"):
        raise UsageError("severity must be 'any' or 'major'")
    if scope == "all" and application is None:
        raise UsageError("scope='all' needs the focal application")
    lo = t - window_days * 86_400
    count = 0
    errors = 0
    for event in events:
        if not lo <= event.timestamp < t:
            continue
        if scope == "self" and event.annotator_id != annotator_id:
            continue
        if scope == "all" and event.application.value != str(application):
            continue
        count += 1
        verdict = derive_verdict(event)
        errors += verdict.is_major_error if severity == "major" else verdict.is_error
    return errors / count if count else MISSING


def rolling_rate_by_category(
    events: Sequence[AnnotationEvent],
    annotator_id: str,
    t: int,
    category_field: str,
    category_value: str,
    window_tasks: int,
) -> float:
    """Share of correct annotations among the annotator's last N prior tasks
    with the given category value; MISSING when there is no such prior task."""
    if category_field not in ("output_media_type", "input_query_type"):
        raise UsageError("category_field must be output_media_type or input_query_type")
    if window_tasks not in WINDOW_TASKS:
        raise UsageError(f"window_tasks must be one of {WINDOW_TASKS}")
    matching = sorted(
        (
            e
            for e in events
            if e.annotator_id == annotator_id
            and e.timestamp < t
            and getattr(e, category_field) == category_value
        ),
        key=lambda e: e.timestamp,
    )
    if not matching:
        return MISSING
    recent = matching[-window_tasks:]
    correct = sum(not derive_verdict(e).is_error for e in recent)
    return correct / len(recent)


@dataclass(frozen=True)
class TenureVolume:
    tenure_full_days: int
    tenure_updated_days: int
    vol_last: dict[int, int]


def tenure_and_volume(
    events: Sequence[AnnotationEvent],
    profiles: Sequence[AnnotatorProfile],
    annotator_id: str,
    t: int,
) -> TenureVolume:
    """Whole-day tenures plus prior-event volume per day window.

    tenure_updated_days counts from the profile's join date; tenure_full_days
    counts from the annotator's first strictly-earlier event in the log (0 when
    there is none).
    """
    profile = next((p for p in profiles if p.annotator_id == annotator_id), None)
    if profile is None:
        raise SchemaError(f"unknown annotator {annotator_id!r}")
    if t < profile.join_date:
        raise LogValidationError(f"annotator {annotator_id!r} has activity before their join date")
    prior = [e.timestamp for e in events if e.annotator_id == annotator_id and e.timestamp < t]
    tenure_full = (t - min(prior)) // 86_400 if prior else 0
    tenure_updated = (t - profile.join_date) // 86_400
    vol = {n: sum(1 for ts in prior if ts >= t - n * 86_400) for n in WINDOW_DAYS}
    return TenureVolume(int(tenure_full), int(tenure_updated), vol)


# --- full-matrix construction ---------------------------------------------------


def _group_slices(codes: np.ndarray, n_groups: int, order: np.ndarray) -> list[np.ndarray]:
    sorted_codes = codes[order]
    bounds = np.searchsorted(sorted_codes, np.arange(n_groups + 1), side="left")
    return [order[bounds[g] : bounds[g + 1]] for g in range(n_groups)]


def _window_rates(
    ts: np.ndarray,
    codes: np.ndarray,
    n_groups: int,
    flags: dict[str, np.ndarray],
    windows: tuple[int, ...],
) -> tuple[dict[tuple[str, int], np.ndarray], dict[int, np.ndarray]]:
    """Per row: rate of each flag and the event count over [t - w days, t),
    grouped by `codes`. Rates are NaN where the window is empty."""
    n = len(ts)
    order = np.lexsort((ts, codes))
    rates = {(name, w): np.full(n, MISSING) for name in flags for w in windows}
    counts = {w: np.zeros(n, dtype=np.float64) for w in windows}
    for idx in _group_slices(codes, n_groups, order):
        tg = ts[idx]
        hi = np.searchsorted(tg, tg, side="left")  # strictly-earlier boundary
        prefixes = {
            name: np.concatenate(([0], np.cumsum(flag[idx], dtype=np.int64)))
            for name, flag in flags.items()
        }
        for w in windows:
            lo = np.searchsorted(tg, tg - w * 86_400, side="left")
            width = hi - lo
            counts[w][idx] = width
            nonempty = width > 0
            for name, prefix in prefixes.items():
                vals = np.full(len(idx), MISSING)
                vals[nonempty] = (prefix[hi] - prefix[lo])[nonempty] / width[nonempty]
                rates[(name, w)][idx] = vals
    return rates, counts


def _category_rates(
    ts: np.ndarray,
    correct: np.ndarray,
    ann_codes: np.ndarray,
    cat_codes: np.ndarray,
    n_ann: int,
    n_cat: int,
    windows: tuple[int, ...],
) -> dict[int, np.ndarray]:
    """Share of correct annotations over the annotator's last N strictly-earlier
    tasks with the same category value; NaN when there is none."""
    n = len(ts)
    combo = ann_codes.astype(np.int64) * n_cat + cat_codes
    order = np.lexsort((ts, combo))
    out = {w: np.full(n, MISSING) for w in windows}
    for idx in _group_slices(combo, n_ann * n_cat, order):
        if len(idx) == 0:
            continue
        tg = ts[idx]
        strict = np.searchsorted(tg, tg, side="left")
        prefix = np.concatenate(([0], np.cumsum(correct[idx], dtype=np.int64)))
        for w in windows:
            k = np.minimum(strict, w)
            has_prior = k > 0
            vals = np.full(len(idx), MISSING)
            vals[has_prior] = (prefix[strict] - prefix[strict - k])[has_prior] / k[has_prior]
            out[w][idx] = vals
    return out


def _encode(values: list[str]) -> tuple[np.ndarray, int]:
    uniques, codes = np.unique(np.asarray(values, dtype=object), return_inverse=True)
    return codes.astype(np.int64), len(uniques)


def build_feature_matrix(
    events: Sequence[AnnotationEvent],
    profiles: Sequence[AnnotatorProfile],
    embedder: Callable[[str], Mapping[str, float]] = trigram_vector,
) -> FeatureMatrix:
    """One feature row per event, aligned with the input order.

    Only the target column reads the focal event's audit label; every
    history-based feature uses strictly earlier events.
    """
    schema = FeatureSchema()
    n = len(events)
    profile_by_id = {p.annotator_id: p for p in profiles}

    ts = np.array([e.timestamp for e in events], dtype=np.int64)
    annotators = [e.annotator_id for e in events]
    for annotator in sorted(set(annotators)):
        if annotator not in profile_by_id:
            raise SchemaError(f"unknown annotator {annotator!r}")
    ann_codes, n_ann = _encode(annotators)
    app_codes, n_app = _encode([e.application.value for e in events])
    media_codes, n_media = _encode([e.output_media_type for e in events])
    query_codes, n_query = _encode([e.input_query_type for e in events])

    verdicts = [derive_verdict(e) for e in events]
    is_err = np.array([v.is_error for v in verdicts], dtype=np.int64)
    is_maj = np.array([v.is_major_error for v in verdicts], dtype=np.int64)
    correct = 1 - is_err

    cols: dict[str, np.ndarray] = {}

    # direct task / session / completion fields
    cols["input_occurrences"] = np.array([e.input_occurrences for e in events], dtype=np.float64)
    cols["input_conversion_rate"] = np.array([e.input_conversion_rate for e in events], dtype=np.float64)
    cols["input_misspelled"] = np.array([e.input_misspelled for e in events], dtype=np.float64)
    cols["nth_task_in_session"] = np.array([e.nth_task_in_session for e in events], dtype=np.float64)
    cols["seconds_into_session"] = np.array([e.seconds_into_session for e in events], dtype=np.float64)
    cols["time_on_task"] = np.array([e.time_on_task for e in events], dtype=np.float64)
    cols["comment_length"] = np.array([e.comment_length for e in events], dtype=np.float64)
    for name, getter in (
        ("input_media_type", lambda e: e.input_media_type),
        ("output_media_type", lambda e: e.output_media_type),
        ("input_language", lambda e: e.input_language),
        ("input_query_type", lambda e: e.input_query_type),
        ("storefront_name", lambda e: e.storefront),
        ("application", lambda e: e.application.value),
        ("answer_value", lambda e: e.annotator_label.label_name),
    ):
        cols[name] = np.asarray([getter(e) for e in events], dtype=object)

    # text similarity
    cols["in_out_edit_distance"] = np.array(
        [float(_levenshtein(_codepoints(e.input_text), _codepoints(e.output_text))) for e in events],
        dtype=np.float64,
    )
    cols["in_out_embedding_distance"] = np.array(
        [embedding_distance(e.input_text, e.output_text, embedder) for e in events], dtype=np.float64
    )

    # rolling self / all windows
    self_rates, self_counts = _window_rates(
        ts, ann_codes, n_ann, {"err": is_err, "maj": is_maj}, WINDOW_DAYS
    )
    all_rates, _ = _window_rates(ts, app_codes, n_app, {"err": is_err, "maj": is_maj}, WINDOW_DAYS)
    for w in WINDOW_DAYS:
        cols[f"error_{w}"] = self_rates[("err", w)]
        cols[f"maj_error_{w}"] = self_rates[("maj", w)]
        cols[f"error_{w}_all"] = all_rates[("err", w)]
        cols[f"maj_error_{w}_all"] = all_rates[("maj", w)]
        cols[f"error_{w}_diff"] = self_rates[("err", w)] - all_rates[("err", w)]
        cols[f"vol_last_{w}"] = self_counts[w]

    # last-N category shares
    media_rates = _category_rates(ts, correct, ann_codes, media_codes, n_ann, n_media, WINDOW_TASKS)
    query_rates = _category_rates(ts, correct, ann_codes, query_codes, n_ann, n_query, WINDOW_TASKS)
    for w in WINDOW_TASKS:
        cols[f"error_rolling_output_media_type_{w}"] = media_rates[w]
        cols[f"error_rolling_input_query_type_user_{w}"] = query_rates[w]

    # tenure and qualification
    tenure_full = np.zeros(n, dtype=np.float64)
    order = np.lexsort((ts, ann_codes))
    for idx in _group_slices(ann_codes, n_ann, order):
        tg = ts[idx]
        strict = np.searchsorted(tg, tg, side="left")
        has_prior = strict > 0
        vals = np.zeros(len(idx), dtype=np.float64)
        if has_prior.any():
            vals[has_prior] = (tg[has_prior] - tg[0]) // 86_400
        tenure_full[idx] = vals
    cols["tenure_full_days"] = tenure_full

    join_dates = np.array([profile_by_id[a].join_date for a in annotators], dtype=np.int64)
    if (ts < join_dates).any():
        bad = int(np.argmax(ts < join_dates))
        raise LogValidationError(
            f"event {events[bad].task_id!r} precedes its annotator's join date",
            task_id=events[bad].task_id,
        )
    cols["tenure_updated_days"] = ((ts - join_dates) // 86_400).astype(np.float64)
    cols["qualification_trials"] = np.array(
        [profile_by_id[a].qualification_trials for a in annotators], dtype=np.float64
    )
    cols["qualification_agreement_rate"] = np.array(
        [profile_by_id[a].qualification_agreement_rate for a in annotators], dtype=np.float64
    )

    return FeatureMatrix(
        schema=schema,
        task_ids=[e.task_id for e in events],
        columns=cols,
        target=is_err.astype(bool),
    )
