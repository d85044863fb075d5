"""Audited annotation events: schema, validation, file I/O, and dataset splitting."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, fields
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import LogValidationError, ParseError


class RelevanceLabel(IntEnum):
    """Five-level ordinal relevance scale; ordinal distance is |a - b|."""

    UNACCEPTABLE = 1
    ACCEPTABLE = 2
    GOOD = 3
    EXCELLENT = 4
    PERFECT = 5

    def distance(self, other: "RelevanceLabel") -> int:
        return abs(int(self) - int(other))

    @property
    def label_name(self) -> str:
        return _LABEL_NAMES[int(self)]

    @classmethod
    def parse(cls, value: object) -> "RelevanceLabel":
        if isinstance(value, RelevanceLabel):
            return value
        if isinstance(value, str):
            token = value.strip()
            if token in _LABEL_BY_NAME:
                return _LABEL_BY_NAME[token]
            if token.isdigit():
                value = int(token)
        if isinstance(value, (int, np.integer)) and 1 <= int(value) <= 5:
            return cls(int(value))
        raise ValueError(f"not a relevance label: {value!r}")


_LABEL_NAMES = {1: "Unacceptable", 2: "Acceptable", 3: "Good", 4: "Excellent", 5: "Perfect"}
_LABEL_BY_NAME = {name: RelevanceLabel(level) for level, name in _LABEL_NAMES.items()}


class Application(str, Enum):
    """The three ML applications whose relevance tasks are audited."""

    MUSIC_STREAMING = "music_streaming"
    MOBILE_APPLICATIONS = "mobile_applications"
    VIDEO_STREAMING = "video_streaming"

    @classmethod
    def parse(cls, value: object) -> "Application":
        if isinstance(value, Application):
            return value
        try:
            return cls(str(value))
        except ValueError:
            raise ValueError(f"not an application: {value!r}") from None


APPLICATIONS = tuple(Application)
INPUT_MEDIA_TYPES = ("keyboard", "voice")


@dataclass(frozen=True)
class AnnotationEvent:
    """One audited annotation task with its annotator label and expert audit label."""

    task_id: str
    annotator_id: str
    application: Application
    storefront: str
    timestamp: int
    session_id: str
    nth_task_in_session: int
    seconds_into_session: float
    input_text: str
    output_text: str
    input_media_type: str
    output_media_type: str
    input_language: str
    input_query_type: str
    input_misspelled: bool
    input_occurrences: int
    input_conversion_rate: float
    annotator_label: RelevanceLabel
    problem_flagged: bool
    time_on_task: float
    comment_length: int
    audit_label: RelevanceLabel


EVENT_FIELDS = tuple(f.name for f in fields(AnnotationEvent))


@dataclass(frozen=True)
class ErrorVerdict:
    """Audit outcome for one event; a major error is more than 2 levels off."""

    is_error: bool
    is_major_error: bool


def derive_verdict(event: AnnotationEvent) -> ErrorVerdict:
    """Compare annotator and audit labels; error iff they differ, major iff distance > 2."""
    dist = event.annotator_label.distance(event.audit_label)
    return ErrorVerdict(is_error=dist > 0, is_major_error=dist > 2)


def validate_event(event: AnnotationEvent) -> None:
    """Check single-event invariants, raising LogValidationError naming the field."""

    def fail(field_name: str, why: str) -> None:
        raise LogValidationError(f"event {event.task_id!r}: {field_name} {why}", task_id=event.task_id)

    if not event.task_id:
        fail("task_id", "is empty")
    if not event.annotator_id:
        fail("annotator_id", "is empty")
    if not isinstance(event.application, Application):
        fail("application", f"invalid: {event.application!r}")
    if event.input_media_type not in INPUT_MEDIA_TYPES:
        fail("input_media_type", f"must be one of {INPUT_MEDIA_TYPES}, got {event.input_media_type!r}")
    if event.nth_task_in_session < 1:
        fail("nth_task_in_session", f"must be >= 1, got {event.nth_task_in_session}")
    if event.seconds_into_session < 0:
        fail("seconds_into_session", f"must be >= 0, got {event.seconds_into_session}")
    if not 0.0 <= event.input_conversion_rate <= 1.0:
        fail("input_conversion_rate", f"must be in [0, 1], got {event.input_conversion_rate}")
    if event.input_occurrences < 0:
        fail("input_occurrences", f"must be >= 0, got {event.input_occurrences}")
    if event.time_on_task <= 0:
        fail("time_on_task", f"must be > 0, got {event.time_on_task}")
    if event.comment_length < 0:
        fail("comment_length", f"must be >= 0, got {event.comment_length}")
    if not isinstance(event.annotator_label, RelevanceLabel):
        fail("annotator_label", f"invalid: {event.annotator_label!r}")
    if not isinstance(event.audit_label, RelevanceLabel):
        fail("audit_label", f"invalid: {event.audit_label!r}")


def validate_log(events: Sequence[AnnotationEvent]) -> None:
    """Check cross-event invariants: task_id uniqueness and per-session ordering."""
    seen: set[str] = set()
    for event in events:
        validate_event(event)
        if event.task_id in seen:
            raise LogValidationError(f"duplicate task_id {event.task_id!r}", task_id=event.task_id)
        seen.add(event.task_id)

    by_session: dict[tuple[str, str], list[AnnotationEvent]] = {}
    for event in events:
        by_session.setdefault((event.annotator_id, event.session_id), []).append(event)
    for (_, session_id), session_events in by_session.items():
        session_events.sort(key=lambda e: e.timestamp)
        for prev, cur in zip(session_events, session_events[1:]):
            if cur.nth_task_in_session <= prev.nth_task_in_session:
                raise LogValidationError(
                    f"session {session_id!r}: nth_task_in_session not strictly increasing "
                    f"at task {cur.task_id!r}",
                    task_id=cur.task_id,
                )
            if cur.seconds_into_session < prev.seconds_into_session:
                raise LogValidationError(
                    f"session {session_id!r}: seconds_into_session decreases at task {cur.task_id!r}",
                    task_id=cur.task_id,
                )


# --- serialization ----------------------------------------------------------

_BOOL_FIELDS = ("input_misspelled", "problem_flagged")
_INT_FIELDS = ("timestamp", "nth_task_in_session", "input_occurrences", "comment_length")
_FLOAT_FIELDS = ("seconds_into_session", "input_conversion_rate", "time_on_task")
_LABEL_FIELDS = ("annotator_label", "audit_label")


def _event_to_record(event: AnnotationEvent) -> dict[str, object]:
    record: dict[str, object] = {}
    for name in EVENT_FIELDS:
        value = getattr(event, name)
        if name in _LABEL_FIELDS:
            record[name] = value.label_name
        elif name == "application":
            record[name] = value.value
        else:
            record[name] = value
    return record


def _record_to_event(record: dict[str, object], where: str) -> AnnotationEvent:
    missing = [name for name in EVENT_FIELDS if name not in record]
    if missing:
        raise ParseError(f"{where}: missing fields {missing}")
    kwargs: dict[str, object] = {}
    try:
        for name in EVENT_FIELDS:
            raw = record[name]
            if name in _LABEL_FIELDS:
                kwargs[name] = RelevanceLabel.parse(raw)
            elif name == "application":
                kwargs[name] = Application.parse(raw)
            elif name in _BOOL_FIELDS:
                kwargs[name] = _parse_bool(raw)
            elif name in _INT_FIELDS:
                kwargs[name] = int(raw)  # type: ignore[call-overload]
            elif name in _FLOAT_FIELDS:
                kwargs[name] = float(raw)  # type: ignore[arg-type]
            else:
                kwargs[name] = str(raw)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{where}: {exc}") from exc
    return AnnotationEvent(**kwargs)  # type: ignore[arg-type]


def _parse_bool(raw: object) -> bool:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, str) and raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    raise ValueError(f"not a boolean: {raw!r}")


def _format_cell(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_log(events: Sequence[AnnotationEvent], path: str | Path) -> None:
    """Write events to JSONL or CSV (chosen by suffix), UTF-8, canonical field order."""
    path = Path(path)
    if path.suffix == ".csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(EVENT_FIELDS)
        for event in events:
            record = _event_to_record(event)
            writer.writerow([_format_cell(record[name]) for name in EVENT_FIELDS])
        path.write_text(buf.getvalue(), encoding="utf-8")
    else:
        lines = []
        for event in events:
            record = _event_to_record(event)
            lines.append(json.dumps(record, ensure_ascii=False, separators=(",", ":")))
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_log(path: str | Path) -> list[AnnotationEvent]:
    """Read and validate a JSONL or CSV log; events are returned in file order."""
    path = Path(path)
    events: list[AnnotationEvent] = []
    if path.suffix == ".csv":
        with path.open(encoding="utf-8", newline="") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None:
                return []
            for lineno, row in enumerate(reader, start=2):
                events.append(_record_to_event(dict(row), f"{path.name}:{lineno}"))
    else:
        with path.open(encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path.name}:{lineno}: invalid JSON: {exc}") from exc
                events.append(_record_to_event(record, f"{path.name}:{lineno}"))
    validate_log(events)
    return events


# --- splitting ---------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test task-id sets plus the seed that produced them."""

    train_ids: tuple[str, ...]
    validation_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "train_ids": list(self.train_ids),
                "validation_ids": list(self.validation_ids),
                "test_ids": list(self.test_ids),
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "DatasetSplit":
        data = json.loads(text)
        return cls(
            train_ids=tuple(data["train_ids"]),
            validation_ids=tuple(data["validation_ids"]),
            test_ids=tuple(data["test_ids"]),
            seed=int(data["seed"]),
        )


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_log(
    events: Sequence[AnnotationEvent],
    test_fraction: float = 0.30,
    validation_fraction: float = 0.30,
    seed: int = 0,
) -> DatasetSplit:
    """Uniformly sample disjoint test / validation / train id sets without replacement.

    |test| = round(test_fraction * N); |validation| = round(validation_fraction * (N - |test|));
    the remainder is the train set. Deterministic for a fixed seed.
    """
    n = len(events)
    if n < 10:
        raise LogValidationError(f"need at least 10 events to split, got {n}")
    if not 0.0 <= test_fraction < 1.0 or not 0.0 <= validation_fraction < 1.0:
        raise LogValidationError("split fractions must lie in [0, 1)")
    ids = [event.task_id for event in events]
    if len(set(ids)) != n:
        raise LogValidationError("task_ids must be unique to split a log")

    n_test = _round_half_up(test_fraction * n)
    n_val = _round_half_up(validation_fraction * (n - n_test))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test = sorted(ids[i] for i in perm[:n_test])
    validation = sorted(ids[i] for i in perm[n_test : n_test + n_val])
    train = sorted(ids[i] for i in perm[n_test + n_val :])
    return DatasetSplit(
        train_ids=tuple(train),
        validation_ids=tuple(validation),
        test_ids=tuple(test),
        seed=seed,
    )


def split_events(
    events: Sequence[AnnotationEvent], split: DatasetSplit
) -> tuple[list[AnnotationEvent], list[AnnotationEvent], list[AnnotationEvent]]:
    """Partition events (preserving order) into the split's train/validation/test lists."""
    train_set, val_set, test_set = set(split.train_ids), set(split.validation_ids), set(split.test_ids)
    train = [e for e in events if e.task_id in train_set]
    validation = [e for e in events if e.task_id in val_set]
    test = [e for e in events if e.task_id in test_set]
    return train, validation, test


def verdicts(events: Iterable[AnnotationEvent]) -> list[ErrorVerdict]:
    return [derive_verdict(event) for event in events]
