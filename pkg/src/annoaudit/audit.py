"""Model-ranked audit prioritization: flip-rate and coverage curves, efficiency gains.

Tasks are audited in order of predicted error probability; the curves track
corrected labels per audit (flip rate) and per error present (coverage). The
random-sampling baseline is the analytic diagonal: auditing a fraction x of
tasks catches an expected fraction x of errors.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateDataError, UsageError


@dataclass
class AuditRanking:
    """Tasks in audit order: descending score, ties broken by ascending task_id."""

    task_ids: list[str]
    scores: np.ndarray
    is_error: np.ndarray

    def __post_init__(self):
        if not (np.diff(self.scores) <= 0).all():
            raise UsageError("ranking scores must be non-increasing")


@dataclass
class AuditCurves:
    flip_rate: np.ndarray  # cumulative errors among first k audits, divided by k
    coverage: np.ndarray  # cumulative errors among first k audits, divided by total errors
    random_baseline_rate: float
    n_errors: int
    n_total: int

    def to_csv(self, path: str | Path) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["k", "flip_rate", "coverage"])
        for k in range(self.n_total):
            writer.writerow([k + 1, repr(float(self.flip_rate[k])), repr(float(self.coverage[k]))])
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


@dataclass(frozen=True)
class EfficiencyGain:
    k_model: int
    k_random: int
    gain: float


def rank_for_audit(
    scores: Sequence[float] | np.ndarray,
    task_ids: Sequence[str],
    is_error: Sequence[bool] | np.ndarray,
) -> AuditRanking:
    """Deterministic audit order; input order never matters."""
    scores = np.asarray(scores, dtype=np.float64)
    is_error = np.asarray(is_error, dtype=bool)
    if not (len(scores) == len(task_ids) == len(is_error)):
        raise UsageError("scores, task_ids, and is_error must be aligned")
    if len(scores) == 0:
        raise UsageError("cannot rank an empty task set")
    ids = np.asarray(task_ids, dtype=object)
    order = np.lexsort((ids, -scores))
    return AuditRanking(
        task_ids=[str(t) for t in ids[order]],
        scores=scores[order],
        is_error=is_error[order],
    )


def compute_curves(ranking: AuditRanking) -> AuditCurves:
    """Flip-rate and coverage series over audit depth k = 1..N."""
    n = len(ranking.scores)
    n_errors = int(ranking.is_error.sum())
    if n_errors == 0 or n_errors == n:
        raise DegenerateDataError("curves need at least one error and one non-error")
    cumulative = np.cumsum(ranking.is_error.astype(np.int64))
    k = np.arange(1, n + 1, dtype=np.float64)
    return AuditCurves(
        flip_rate=cumulative / k,
        coverage=cumulative / n_errors,
        random_baseline_rate=n_errors / n,
        n_errors=n_errors,
        n_total=n,
    )


def efficiency_gain(curves: AuditCurves, target_coverage: float = 0.8) -> EfficiencyGain:
    """Audits needed for the target coverage, model-ranked vs expected random.

    k_random is the analytic expectation ceil(target * N): random sampling
    catches errors in proportion to audit volume.
    """
    if not 0.0 < target_coverage <= 1.0:
        raise UsageError("target_coverage must lie in (0, 1]")
    reached = np.nonzero(curves.coverage >= target_coverage)[0]
    if len(reached) == 0:
        raise DegenerateDataError(f"coverage never reaches {target_coverage}")
    k_model = int(reached[0]) + 1
    k_random = int(np.ceil(target_coverage * curves.n_total))
    return EfficiencyGain(k_model=k_model, k_random=k_random, gain=1.0 - k_model / k_random)


def early_lift(curves: AuditCurves, k: int) -> float:
    """Flip rate among the first k audits relative to the random baseline."""
    if not 1 <= k <= curves.n_total:
        raise UsageError(f"k must lie in [1, {curves.n_total}]")
    if curves.random_baseline_rate == 0:
        raise DegenerateDataError("baseline error rate is zero")
    return float(curves.flip_rate[k - 1] / curves.random_baseline_rate)


def coverage_area(curves: AuditCurves) -> float:
    """Mean coverage over audit depth; grows with the quality of the ranking."""
    return float(curves.coverage.mean())


def monte_carlo_coverage_envelope(
    n_total: int,
    n_errors: int,
    checkpoints: Sequence[int],
    n_simulations: int = 2000,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Min/max coverage envelope of random audit orderings at the given depths."""
    rng = np.random.default_rng(seed)
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    labels = np.zeros(n_total, dtype=np.int64)
    labels[:n_errors] = 1
    lo = np.full(len(checkpoints), np.inf)
    hi = np.full(len(checkpoints), -np.inf)
    for _ in range(n_simulations):
        shuffled = rng.permutation(labels)
        coverage = np.cumsum(shuffled)[checkpoints - 1] / n_errors
        lo = np.minimum(lo, coverage)
        hi = np.maximum(hi, coverage)
    return lo, hi
