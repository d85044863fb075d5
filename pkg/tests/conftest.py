from __future__ import annotations

import numpy as np
import pytest

from annoaudit.events import AnnotationEvent, Application, RelevanceLabel


def make_event(**overrides) -> AnnotationEvent:
    """A valid event with every field defaulted; override what the test cares about."""
    base = dict(
        task_id="t000001",
        annotator_id="a01",
        application=Application.MUSIC_STREAMING,
        storefront="US",
        timestamp=1_700_000_000,
        session_id="a01-s0",
        nth_task_in_session=1,
        seconds_into_session=0.0,
        input_text="master of puppets",
        output_text="master of puppets",
        input_media_type="keyboard",
        output_media_type="song",
        input_language="en",
        input_query_type="navigational",
        input_misspelled=False,
        input_occurrences=120,
        input_conversion_rate=0.45,
        annotator_label=RelevanceLabel.PERFECT,
        problem_flagged=False,
        time_on_task=22.5,
        comment_length=0,
        audit_label=RelevanceLabel.PERFECT,
    )
    base.update(overrides)
    return AnnotationEvent(**base)


@pytest.fixture
def tiny_log() -> list[AnnotationEvent]:
    """Twelve events for two annotators across two sessions each, fixed by hand."""
    rng = np.random.default_rng(7)
    events = []
    t0 = 1_700_000_000
    k = 0
    for annotator in ("a01", "a02"):
        for session in range(2):
            start = t0 + session * 86_400 + (0 if annotator == "a01" else 3_600)
            for nth in range(1, 4):
                k += 1
                annot = RelevanceLabel(int(rng.integers(1, 6)))
                audit = RelevanceLabel(int(rng.integers(1, 6)))
                events.append(
                    make_event(
                        task_id=f"t{k:06d}",
                        annotator_id=annotator,
                        session_id=f"{annotator}-s{session}",
                        timestamp=start + (nth - 1) * 30,
                        nth_task_in_session=nth,
                        seconds_into_session=(nth - 1) * 30.0,
                        annotator_label=annot,
                        audit_label=audit,
                    )
                )
    events.sort(key=lambda e: (e.timestamp, e.task_id))
    return events
