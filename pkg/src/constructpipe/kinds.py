"""The three supported pipeline kinds and their per-kind defaults.

Each kind bundles the unit granularity, the overlap-sampling knobs for class
generation, the summary length contract, the JSON key the generation and fit
prompts use for class names, and the reserved none-class semantics:
frame pipelines route detection-no units to an unrated "No Frame" label,
while the topic pipeline carries a rated MISCELLANEOUS class through review.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class LengthSpec:
    """Summary length contract: a word range or a sentence cap (soft limits)."""

    unit: str  # "words" or "sentences"
    min_count: int | None
    max_count: int


@dataclass(frozen=True)
class PipelineKind:
    name: str
    granularity: str
    has_detect: bool
    batch_size: int
    carryover_fraction: float
    classes_per_call_cap: int
    short_summary_spec: LengthSpec
    long_summary_spec: LengthSpec
    class_key: str  # JSON key naming a class in generation replies
    fit_name_key: str  # JSON key naming the class in fit replies
    summaries_placeholder: str  # placeholder carrying the batch in generation
    none_class: str
    none_class_rated: bool
    name_words: tuple[int, int]


_TWO_SENTENCES = LengthSpec(unit="sentences", min_count=None, max_count=2)

PIPELINE_KINDS: dict[str, PipelineKind] = {
    "frames_sentence": PipelineKind(
        name="frames_sentence",
        granularity="sentence",
        has_detect=True,
        batch_size=50,
        carryover_fraction=0.2,
        classes_per_call_cap=9,
        short_summary_spec=LengthSpec(unit="words", min_count=3, max_count=10),
        long_summary_spec=_TWO_SENTENCES,
        class_key="frame",
        fit_name_key="Frame",
        summaries_placeholder="FRAME SUMMARIES",
        none_class="No Frame",
        none_class_rated=False,
        name_words=(2, 4),
    ),
    "frames_paragraph": PipelineKind(
        name="frames_paragraph",
        granularity="paragraph",
        has_detect=True,
        batch_size=100,
        carryover_fraction=0.2,
        classes_per_call_cap=9,
        short_summary_spec=LengthSpec(unit="words", min_count=8, max_count=16),
        long_summary_spec=_TWO_SENTENCES,
        class_key="frame",
        fit_name_key="Frame",
        summaries_placeholder="FRAME SUMMARIES",
        none_class="No Frame",
        none_class_rated=False,
        name_words=(2, 4),
    ),
    "topics": PipelineKind(
        name="topics",
        granularity="full_text",
        has_detect=False,
        batch_size=100,
        carryover_fraction=0.2,
        classes_per_call_cap=21,
        short_summary_spec=_TWO_SENTENCES,
        long_summary_spec=_TWO_SENTENCES,
        class_key="topic",
        fit_name_key="Topic",
        summaries_placeholder="TOPIC SUMMARIES",
        none_class="MISCELLANEOUS",
        none_class_rated=True,
        name_words=(1, 4),
    ),
}


def get_kind(name: str) -> PipelineKind:
    try:
        return PIPELINE_KINDS[name]
    except KeyError:
        raise ValueError(
            f"unknown pipeline kind {name!r}; expected one of {', '.join(PIPELINE_KINDS)}"
        ) from None
