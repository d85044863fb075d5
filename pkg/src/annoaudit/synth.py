"""Synthetic audited-annotation logs with a known latent error process.

Annotator skill, task difficulty, session fatigue, and rushing drive a logistic
error model; the per-event probabilities are emitted to a sidecar so model AUC
can be compared against the best score any model could achieve.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CalibrationError, DegenerateDataError, LogValidationError, UsageError
from .events import AnnotationEvent, Application, RelevanceLabel, derive_verdict

STOREFRONTS = ("US", "GB", "DE", "FR", "JP", "AU", "CA", "BR")
_STOREFRONT_WEIGHTS = (0.30, 0.14, 0.12, 0.10, 0.12, 0.07, 0.08, 0.07)

LANGUAGES = ("en", "de", "fr", "es", "it", "ja", "pt", "nl", "sv", "ko")
_LANGUAGE_WEIGHTS = (0.42, 0.10, 0.09, 0.08, 0.05, 0.10, 0.06, 0.04, 0.03, 0.03)

QUERY_TYPES = ("navigational", "informational", "entity", "category", "transactional")
_QUERY_TYPE_WEIGHTS = (0.38, 0.16, 0.24, 0.12, 0.10)

OUTPUT_MEDIA_TYPES = ("song", "album", "artist", "playlist", "video", "app")
_OUTPUT_MEDIA_BY_APP = {
    Application.MUSIC_STREAMING: (0.48, 0.18, 0.17, 0.13, 0.03, 0.01),
    Application.MOBILE_APPLICATIONS: (0.02, 0.01, 0.02, 0.01, 0.04, 0.90),
    Application.VIDEO_STREAMING: (0.04, 0.02, 0.05, 0.06, 0.80, 0.03),
}

# Output tokens copy input tokens with this probability, per true label; text
# similarity therefore tracks relevance.
_OVERLAP_BY_LABEL = {1: 0.08, 2: 0.25, 3: 0.45, 4: 0.65, 5: 0.85}

VOCABULARY = (
    "master puppets metallica shadow moon river stone echo dawn fire light "
    "dance party summer winter night day love heart star sky blue red gold "
    "silver king queen dream road home city rain storm thunder wave ocean "
    "mountain forest wild free run fast slow deep high low new old best top "
    "hit play game puzzle chess racer builder craft world quest saga legend "
    "hero villain space galaxy rocket planet alien robot pixel retro arcade "
    "photo camera edit filter music tune beat remix cover live studio radio "
    "podcast comedy drama thriller romance story kids family learn teach "
    "math words brain train fit yoga health sleep calm focus timer clock "
    "weather news sport soccer tennis golf chef recipe food coffee tea cake "
    "travel map guide hotel flight ticket budget money bank shop deal sale"
).split()

_TIME_LOG_MEAN = math.log(25.0)
_TIME_LOG_SD = 0.6
_SESSION_NORM_SCALE = 25.0


@dataclass(frozen=True)
class AnnotatorProfile:
    """Latent skill plus the observable annotator metadata features derive from."""

    annotator_id: str
    skill: float
    join_date: int
    qualification_trials: int
    qualification_agreement_rate: float
    daily_volume_rate: float

    def __post_init__(self):
        if not 0.0 <= self.qualification_agreement_rate <= 1.0:
            raise LogValidationError(
                f"annotator {self.annotator_id}: qualification_agreement_rate out of [0, 1]"
            )
        if self.qualification_trials < 1:
            raise LogValidationError(f"annotator {self.annotator_id}: qualification_trials < 1")


@dataclass(frozen=True)
class TaskTemplate:
    """One task to be annotated: metadata, latent difficulty, and the true label."""

    task_id: str
    application: Application
    storefront: str
    difficulty: float
    input_text: str
    output_text: str
    input_media_type: str
    output_media_type: str
    input_language: str
    input_query_type: str
    input_misspelled: bool
    input_occurrences: int
    input_conversion_rate: float
    true_label: RelevanceLabel


@dataclass(frozen=True)
class Coefficients:
    """Linear coefficients of the latent logistic error model."""

    intercept: float = math.log(0.1 / 0.9)
    skill: float = 1.0
    difficulty: float = 0.65
    fatigue: float = 0.6
    rush: float = 0.8


@dataclass(frozen=True)
class GenConfig:
    n_annotators: int = 150
    n_tasks: int = 50_000
    start_timestamp: int = 1_735_689_600  # 2025-01-01T00:00:00Z
    n_days: int = 180
    target_error_rate: float = 0.10
    coefficients: Coefficients = field(default_factory=Coefficients)
    app_offsets: tuple[float, float, float] = (-0.15, 0.05, 0.15)  # music, mobile, video
    app_weights: tuple[float, float, float] = (0.44, 0.42, 0.14)
    mean_session_length: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.target_error_rate < 1.0:
            raise UsageError(f"target_error_rate must lie in (0, 1), got {self.target_error_rate}")
        if self.n_annotators < 0 or self.n_tasks < 0:
            raise UsageError("n_annotators and n_tasks must be non-negative")
        if self.n_days < 1:
            raise UsageError("n_days must be positive")
        if self.mean_session_length < 1.0:
            raise UsageError("mean_session_length must be at least 1")
        if abs(sum(self.app_weights) - 1.0) > 1e-9 or min(self.app_weights) < 0:
            raise UsageError("app_weights must be a probability vector over the three applications")

    def to_dict(self) -> dict:
        c = self.coefficients
        return {
            "n_annotators": self.n_annotators,
            "n_tasks": self.n_tasks,
            "start_timestamp": self.start_timestamp,
            "n_days": self.n_days,
            "target_error_rate": self.target_error_rate,
            "coefficients": {
                "intercept": c.intercept,
                "skill": c.skill,
                "difficulty": c.difficulty,
                "fatigue": c.fatigue,
                "rush": c.rush,
            },
            "app_offsets": list(self.app_offsets),
            "app_weights": list(self.app_weights),
            "mean_session_length": self.mean_session_length,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GenConfig":
        data = dict(data)
        coeffs = data.pop("coefficients", None)
        kwargs = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        unknown = set(data) - set(kwargs)
        if unknown:
            raise UsageError(f"unknown generator config keys: {sorted(unknown)}")
        for key in ("app_offsets", "app_weights"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if coeffs is not None:
            kwargs["coefficients"] = Coefficients(**coeffs)
        return cls(**kwargs)


@dataclass
class GeneratedLog:
    """Events plus the hidden per-event error probabilities, index-aligned."""

    events: list[AnnotationEvent]
    true_error_probability: np.ndarray
    intercept: float
    realized_error_rate: float


def _sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    if out.ndim == 0:
        return float(out)
    return out


def error_probability(
    skill: float,
    difficulty: float,
    session_position_norm: float,
    rush_factor: float,
    coefficients: Coefficients,
    app_offset: float = 0.0,
):
    """Latent probability that this annotation is an error.

    sigmoid(intercept + app_offset - b_skill*skill + b_difficulty*difficulty
            + b_fatigue*session_position_norm + b_rush*rush_factor)
    """
    c = coefficients
    z = (
        c.intercept
        + app_offset
        - c.skill * np.asarray(skill, dtype=np.float64)
        + c.difficulty * np.asarray(difficulty, dtype=np.float64)
        + c.fatigue * np.asarray(session_position_norm, dtype=np.float64)
        + c.rush * np.asarray(rush_factor, dtype=np.float64)
    )
    return _sigmoid(z)


def generate_population(config: GenConfig) -> tuple[list[AnnotatorProfile], list[TaskTemplate]]:
    """Draw annotator profiles and task templates; deterministic for a fixed seed."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))

    profiles: list[AnnotatorProfile] = []
    n_a = config.n_annotators
    skills = rng.standard_normal(n_a)
    join_days_before = rng.integers(30, 400, size=n_a)
    trials = 1 + rng.poisson(np.exp(-0.6 * skills))
    qual_noise = rng.standard_normal(n_a)
    qual_rate = np.round(0.6 + 0.4 * _sigmoid(1.3 * skills + 0.55 * qual_noise), 4)
    volume_rate = np.round(np.exp(rng.normal(0.8, 0.5, size=n_a)), 3)
    for i in range(n_a):
        profiles.append(
            AnnotatorProfile(
                annotator_id=f"a{i:04d}",
                skill=float(skills[i]),
                join_date=int(config.start_timestamp - int(join_days_before[i]) * 86_400),
                qualification_trials=int(trials[i]),
                qualification_agreement_rate=float(qual_rate[i]),
                daily_volume_rate=float(volume_rate[i]),
            )
        )

    n_t = config.n_tasks
    apps = rng.choice(len(APPLICATION_ORDER), size=n_t, p=np.asarray(config.app_weights))
    storefronts = rng.choice(len(STOREFRONTS), size=n_t, p=np.asarray(_STOREFRONT_WEIGHTS))
    difficulty = rng.standard_normal(n_t)
    # Harder tasks skew toward worse true labels, so label and text similarity
    # carry difficulty signal the model can observe.
    label_latent = 2.1 - 0.55 * difficulty + rng.normal(0.0, 0.9, size=n_t)
    true_labels = 1 + np.clip(np.floor(label_latent), 0, 4).astype(np.int64)
    languages = rng.choice(len(LANGUAGES), size=n_t, p=np.asarray(_LANGUAGE_WEIGHTS))
    query_types = rng.choice(len(QUERY_TYPES), size=n_t, p=np.asarray(_QUERY_TYPE_WEIGHTS))
    media_in = np.where(rng.random(n_t) < 0.8, "keyboard", "voice")
    misspelled = rng.random(n_t) < _sigmoid(-2.2 + 0.5 * difficulty)
    occurrences = np.round(np.exp(4.0 - 1.1 * difficulty + rng.normal(0.0, 0.5, size=n_t))).astype(np.int64)
    conversion = np.round(_sigmoid(1.1 - 0.9 * difficulty + rng.normal(0.0, 0.4, size=n_t)), 4)

    vocab = np.array(VOCABULARY)
    vocab_weights = 1.0 / np.arange(1, len(vocab) + 1) ** 0.8
    vocab_weights /= vocab_weights.sum()

    templates: list[TaskTemplate] = []
    for i in range(n_t):
        app = APPLICATION_ORDER[int(apps[i])]
        n_in = 1 + min(int(rng.poisson(1.2)), 3)
        in_tokens = [str(t) for t in rng.choice(vocab, size=n_in, p=vocab_weights)]
        input_text = " ".join(in_tokens)
        if misspelled[i] and input_text:
            pos = int(rng.integers(0, len(input_text)))
            repl = chr(ord("a") + int(rng.integers(0, 26)))
            input_text = input_text[:pos] + repl + input_text[pos + 1 :]
            in_tokens = input_text.split()
        overlap_p = _OVERLAP_BY_LABEL[int(true_labels[i])]
        n_out = 2 + min(int(rng.poisson(1.5)), 4)
        out_tokens = []
        for _ in range(n_out):
            if in_tokens and rng.random() < overlap_p:
                out_tokens.append(in_tokens[int(rng.integers(0, len(in_tokens)))])
            else:
                out_tokens.append(str(rng.choice(vocab, p=vocab_weights)))
        media_out = OUTPUT_MEDIA_TYPES[
            int(rng.choice(len(OUTPUT_MEDIA_TYPES), p=np.asarray(_OUTPUT_MEDIA_BY_APP[app])))
        ]
        templates.append(
            TaskTemplate(
                task_id=f"t{i:06d}",
                application=app,
                storefront=STOREFRONTS[int(storefronts[i])],
                difficulty=float(difficulty[i]),
                input_text=input_text,
                output_text=" ".join(out_tokens),
                input_media_type=str(media_in[i]),
                output_media_type=media_out,
                input_language=LANGUAGES[int(languages[i])],
                input_query_type=QUERY_TYPES[int(query_types[i])],
                input_misspelled=bool(misspelled[i]),
                input_occurrences=int(occurrences[i]),
                input_conversion_rate=float(conversion[i]),
                true_label=RelevanceLabel(int(true_labels[i])),
            )
        )
    return profiles, templates


APPLICATION_ORDER = (
    Application.MUSIC_STREAMING,
    Application.MOBILE_APPLICATIONS,
    Application.VIDEO_STREAMING,
)


def calibrate_intercept(z_without_intercept: np.ndarray, target_rate: float, max_iter: int = 200) -> float:
    """Bisect the intercept so the mean latent probability equals the target rate."""
    lo, hi = -40.0, 40.0
    z = np.asarray(z_without_intercept, dtype=np.float64)
    if float(np.mean(_sigmoid(lo + z))) > target_rate or float(np.mean(_sigmoid(hi + z))) < target_rate:
        raise CalibrationError("target error rate is not reachable by shifting the intercept")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        rate = float(np.mean(_sigmoid(mid + z)))
        if abs(rate - target_rate) < 1e-12:
            return mid
        if rate < target_rate:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    if abs(float(np.mean(_sigmoid(mid + z))) - target_rate) > 1e-6:
        raise CalibrationError("intercept bisection did not converge within its budget")
    return mid


def generate_log(
    population: tuple[Sequence[AnnotatorProfile], Sequence[TaskTemplate]],
    config: GenConfig,
) -> GeneratedLog:
    """Realize sessions, timings, and annotator labels for every task template.

    Deterministic for a fixed config. All random draws are made for every event
    regardless of its error outcome, so changing one annotator's skill changes
    only that annotator's latent probabilities.
    """
    profiles, templates = population
    n = len(templates)
    if n == 0:
        return GeneratedLog([], np.zeros(0), config.coefficients.intercept, 0.0)
    if len(profiles) == 0:
        raise DegenerateDataError("cannot generate a non-empty log from an empty annotator pool")

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    n_a = len(profiles)
    weights = np.array([p.daily_volume_rate for p in profiles], dtype=np.float64)
    weights = weights / weights.sum()
    assigned = rng.choice(n_a, size=n, p=weights)

    # Per-event draws, in template order, independent of profile values.
    time_on_task = np.round(np.clip(np.exp(rng.normal(_TIME_LOG_MEAN, _TIME_LOG_SD, size=n)), 1.0, 600.0), 1)
    gaps = np.round(rng.exponential(4.0, size=n), 1)
    error_uniform = rng.random(n)
    displacement = rng.geometric(0.5, size=n)
    direction_uniform = rng.random(n)
    flag_uniform = rng.random(n)
    comment_uniform = rng.random(n)
    comment_poisson = rng.poisson(3.0, size=n)

    end_ts = config.start_timestamp + config.n_days * 86_400
    session_p = 1.0 / config.mean_session_length

    order = np.argsort(assigned, kind="stable")
    app_offset_by_app = dict(zip(APPLICATION_ORDER, config.app_offsets))

    rows: list[dict] = []
    for a_idx in range(n_a):
        block_lo = np.searchsorted(assigned[order], a_idx, side="left")
        block_hi = np.searchsorted(assigned[order], a_idx, side="right")
        task_positions = order[block_lo:block_hi]
        if len(task_positions) == 0:
            continue
        profile = profiles[a_idx]
        remaining = len(task_positions)
        lengths = []
        while remaining > 0:
            length = int(rng.geometric(session_p))
            lengths.append(min(length, remaining))
            remaining -= lengths[-1]
        window_lo = max(config.start_timestamp, profile.join_date + 86_400)
        starts = np.sort(rng.integers(window_lo, max(end_ts, window_lo + 1), size=len(lengths)))
        cursor = 0
        prev_end = -np.inf
        for s_idx, length in enumerate(lengths):
            session_start = int(max(int(starts[s_idx]), prev_end + 60))
            seconds = 0.0
            for nth in range(1, length + 1):
                pos = task_positions[cursor]
                cursor += 1
                rows.append(
                    {
                        "template_index": int(pos),
                        "annotator_index": a_idx,
                        "session_id": f"{profile.annotator_id}-s{s_idx}",
                        "nth": nth,
                        "seconds": round(seconds, 1),
                        "timestamp": session_start + int(seconds),
                        "time_on_task": float(time_on_task[pos]),
                    }
                )
                seconds += float(time_on_task[pos]) + float(gaps[pos])
            prev_end = session_start + seconds

    # Latent linear predictor without intercept, then calibrate the intercept.
    z = np.empty(len(rows))
    for i, row in enumerate(rows):
        template = templates[row["template_index"]]
        profile = profiles[row["annotator_index"]]
        rush = (_TIME_LOG_MEAN - math.log(row["time_on_task"])) / _TIME_LOG_SD
        fatigue = (row["nth"] - 1) / _SESSION_NORM_SCALE
        c = config.coefficients
        z[i] = (
            app_offset_by_app[template.application]
            - c.skill * profile.skill
            + c.difficulty * template.difficulty
            + c.fatigue * fatigue
            + c.rush * rush
        )
    intercept = calibrate_intercept(z, config.target_error_rate)
    probabilities = _sigmoid(intercept + z)

    events: list[AnnotationEvent] = []
    for i, row in enumerate(rows):
        template = templates[row["template_index"]]
        profile = profiles[row["annotator_index"]]
        pos = row["template_index"]
        true_label = int(template.true_label)
        if error_uniform[pos] < probabilities[i]:
            k_max = max(true_label - 1, 5 - true_label)
            k = min(int(displacement[pos]), k_max)
            up_ok = true_label + k <= 5
            down_ok = true_label - k >= 1
            if up_ok and down_ok:
                label = true_label + k if direction_uniform[pos] < 0.5 else true_label - k
            elif up_ok:
                label = true_label + k
            else:
                label = true_label - k
        else:
            label = true_label
        flagged = bool(flag_uniform[pos] < (0.015 + (0.03 if template.difficulty > 1.0 else 0.0)))
        has_comment = comment_uniform[pos] < (0.2 + (0.1 if template.difficulty > 0.5 else 0.0))
        comment_length = int(1 + comment_poisson[pos]) if has_comment else 0
        events.append(
            AnnotationEvent(
                task_id=template.task_id,
                annotator_id=profile.annotator_id,
                application=template.application,
                storefront=template.storefront,
                timestamp=int(row["timestamp"]),
                session_id=row["session_id"],
                nth_task_in_session=int(row["nth"]),
                seconds_into_session=float(row["seconds"]),
                input_text=template.input_text,
                output_text=template.output_text,
                input_media_type=template.input_media_type,
                output_media_type=template.output_media_type,
                input_language=template.input_language,
                input_query_type=template.input_query_type,
                input_misspelled=template.input_misspelled,
                input_occurrences=template.input_occurrences,
                input_conversion_rate=template.input_conversion_rate,
                annotator_label=RelevanceLabel(label),
                problem_flagged=flagged,
                time_on_task=float(row["time_on_task"]),
                comment_length=comment_length,
                audit_label=RelevanceLabel(true_label),
            )
        )

    event_order = sorted(range(len(events)), key=lambda i: (events[i].timestamp, events[i].task_id))
    events = [events[i] for i in event_order]
    probabilities = probabilities[np.asarray(event_order, dtype=np.int64)]
    realized = float(np.mean([derive_verdict(e).is_error for e in events]))
    return GeneratedLog(events, probabilities, intercept, realized)


def oracle_auc(events: Sequence[AnnotationEvent], probabilities: np.ndarray) -> float:
    """AUC of the hidden true error probabilities against the realized verdicts."""
    from .evaluation import auc

    if len(events) != len(probabilities):
        raise UsageError("probabilities are not aligned with events")
    labels = np.array([derive_verdict(e).is_error for e in events], dtype=np.int64)
    return auc(np.asarray(probabilities, dtype=np.float64), labels)


# --- sidecar and profile files ------------------------------------------------


def write_sidecar(events: Sequence[AnnotationEvent], probabilities: np.ndarray, path: str | Path) -> None:
    """Hidden true probabilities, one JSON object per event, aligned by task_id."""
    lines = [
        json.dumps({"task_id": e.task_id, "true_error_probability": float(p)}, separators=(",", ":"))
        for e, p in zip(events, probabilities)
    ]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_sidecar(path: str | Path) -> dict[str, float]:
    out: dict[str, float] = {}
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                record = json.loads(line)
                out[record["task_id"]] = float(record["true_error_probability"])
    return out


def write_profiles(profiles: Sequence[AnnotatorProfile], path: str | Path) -> None:
    lines = []
    for p in profiles:
        lines.append(
            json.dumps(
                {
                    "annotator_id": p.annotator_id,
                    "skill": p.skill,
                    "join_date": p.join_date,
                    "qualification_trials": p.qualification_trials,
                    "qualification_agreement_rate": p.qualification_agreement_rate,
                    "daily_volume_rate": p.daily_volume_rate,
                },
                separators=(",", ":"),
            )
        )
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_profiles(path: str | Path) -> list[AnnotatorProfile]:
    profiles = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                profiles.append(AnnotatorProfile(**json.loads(line)))
    return profiles


def perturb_skill(
    population: tuple[list[AnnotatorProfile], list[TaskTemplate]],
    annotator_id: str,
    delta: float,
) -> tuple[list[AnnotatorProfile], list[TaskTemplate]]:
    """Copy of the population with one annotator's skill shifted; used to probe monotonicity."""
    profiles, templates = population
    out = [replace(p, skill=p.skill + delta) if p.annotator_id == annotator_id else p for p in profiles]
    return out, templates
