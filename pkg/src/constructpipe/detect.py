"""Two-interaction construct detection: free-text reasoning, then a binary label.

Interaction one renders the detection template with the unit's title and text
and stores the reply as thoughts. Interaction two replays that exchange plus
the assistant thoughts and asks for just Yes or No. Units whose final answer
stays unparseable after the re-ask cap are marked failed, never coerced to
"no": coercion would bias prevalence downstream.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corpus import CorpusUnit
from .gateway import GatewayClient, ParseFailure, PromptTemplate, render
from .gateway.client import AskResult

REASK_TEXT = "Please answer with just Yes or No."

_WORDS_RE = re.compile(r"[A-Za-z]+")


@dataclass(frozen=True)
class DetectionRecord:
    unit_id: str
    status: str  # "yes" | "no" | "failed"
    thoughts: str
    attempts: int
    stage_template_ids: tuple[str, str]
    error: str | None = None

    def to_json(self) -> dict:
        record = {
            "unit_id": self.unit_id,
            "status": self.status,
            "thoughts": self.thoughts,
            "attempts": self.attempts,
            "templates": list(self.stage_template_ids),
        }
        if self.error is not None:
            record["error"] = self.error
        return record


def parse_yes_no(raw: str) -> str:
    """Normalize a reply to "yes"/"no"; raise ParseFailure otherwise.

    The first alphabetic token decides. A reply containing both words is
    ambiguous and fails regardless of order ("Yes and no").
    """
    tokens = [t.lower() for t in _WORDS_RE.findall(raw)]
    if not tokens:
        raise ParseFailure("no alphabetic token in reply")
    has_yes = "yes" in tokens
    has_no = "no" in tokens
    if has_yes and has_no:
        raise ParseFailure("ambiguous reply: contains both yes and no")
    if tokens[0] in ("yes", "no"):
        return tokens[0]
    raise ParseFailure(f"first token {tokens[0]!r} is neither yes nor no")


def unit_context(unit: CorpusUnit, template: PromptTemplate, extra: dict[str, str] | None = None) -> dict[str, str]:
    """Bindings for a unit, filtered to what the template actually uses.

    The unit's text answers to SENTENCE, PARAGRAPH, and ARTICLE alike, so one
    code path serves all three pipeline kinds (and the appendix templates'
    occasional mixed naming).
    """
    ctx = {
        "TITLE": unit.title,
        "SENTENCE": unit.text,
        "PARAGRAPH": unit.text,
        "ARTICLE": unit.text,
    }
    if extra:
        ctx.update(extra)
    return {k: v for k, v in ctx.items() if k in template.placeholders}


def detect_unit(
    client: GatewayClient,
    t_one: PromptTemplate,
    t_two: PromptTemplate,
    unit: CorpusUnit,
    max_attempts: int,
) -> DetectionRecord:
    template_ids = (t_one.ref, t_two.ref)

    thoughts_result = _ask_thoughts(client, t_one, unit, max_attempts)
    if not thoughts_result.ok:
        return DetectionRecord(
            unit_id=unit.unit_id,
            status="failed",
            thoughts="",
            attempts=thoughts_result.attempts,
            stage_template_ids=template_ids,
            error=f"interaction one: {thoughts_result.error}",
        )
    thoughts = thoughts_result.value

    messages = render(t_two, unit_context(unit, t_two, {"THOUGHTS": thoughts}))
    answer = client.ask_parsed("detect_2", messages, parse_yes_no, REASK_TEXT, max_attempts)
    if not answer.ok:
        return DetectionRecord(
            unit_id=unit.unit_id,
            status="failed",
            thoughts=thoughts,
            attempts=answer.attempts,
            stage_template_ids=template_ids,
            error=f"interaction two: {answer.error}",
        )
    return DetectionRecord(
        unit_id=unit.unit_id,
        status=answer.value,
        thoughts=thoughts,
        attempts=answer.attempts,
        stage_template_ids=template_ids,
    )


def _ask_thoughts(client: GatewayClient, template: PromptTemplate, unit: CorpusUnit, max_attempts: int) -> AskResult:
    messages = render(template, unit_context(unit, template))

    def any_text(raw: str) -> str:
        return raw

    # free-text stage: the only failure mode is an empty completion, which
    # ask_parsed retries by resending the unchanged exchange
    return client.ask_parsed("detect_1", messages, any_text, REASK_TEXT, max_attempts)
