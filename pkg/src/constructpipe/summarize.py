"""Per-unit construct summaries: the short form that seeds class generation
and the longer form used during classification.

Length bounds are soft. The model cannot be forced to comply, so a summary
outside its spec is stored with a warning rather than rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import CorpusUnit, default_abbreviations, split_sentences
from .detect import unit_context
from .gateway import GatewayClient, PromptTemplate, render
from .kinds import LengthSpec

SHORT_KIND = "short_for_generation"
LONG_KIND = "long_for_classification"


@dataclass(frozen=True)
class SummaryRecord:
    unit_id: str
    kind: str  # SHORT_KIND | LONG_KIND
    text: str
    word_count: int
    warning: str | None
    attempts: int
    template_id: str
    failed: bool = False
    error: str | None = None

    def to_json(self) -> dict:
        record = {
            "unit_id": self.unit_id,
            "kind": self.kind,
            "text": self.text,
            "word_count": self.word_count,
            "warning": self.warning,
            "attempts": self.attempts,
            "template": self.template_id,
        }
        if self.failed:
            record["failed"] = True
            record["error"] = self.error
        return record


def word_count(text: str) -> int:
    return len(text.strip().split())


def length_warning(text: str, spec: LengthSpec) -> str | None:
    if spec.unit == "words":
        n = word_count(text)
        if spec.min_count is not None and n < spec.min_count:
            return f"summary has {n} words, below the {spec.min_count}-{spec.max_count} word spec"
        if n > spec.max_count:
            return f"summary has {n} words, above the {spec.min_count}-{spec.max_count} word spec"
        return None
    n = len(split_sentences(text.strip(), default_abbreviations()))
    if n > spec.max_count:
        return f"summary has {n} sentences, above the {spec.max_count}-sentence spec"
    return None


def summarize_unit(
    client: GatewayClient,
    template: PromptTemplate,
    unit: CorpusUnit,
    kind: str,
    spec: LengthSpec,
    stage: str,
    max_attempts: int,
) -> SummaryRecord:
    """One summary per (unit, kind). Only empty completions are retried;
    whatever non-empty text comes back is the summary.
    """
    messages = render(template, unit_context(unit, template))
    result = client.ask_parsed(stage, messages, lambda raw: raw.strip(), "", max_attempts)
    if not result.ok:
        return SummaryRecord(
            unit_id=unit.unit_id,
            kind=kind,
            text="",
            word_count=0,
            warning=None,
            attempts=result.attempts,
            template_id=template.ref,
            failed=True,
            error=result.error,
        )
    text = result.value
    return SummaryRecord(
        unit_id=unit.unit_id,
        kind=kind,
        text=text,
        word_count=word_count(text),
        warning=length_warning(text, spec),
        attempts=result.attempts,
        template_id=template.ref,
    )
