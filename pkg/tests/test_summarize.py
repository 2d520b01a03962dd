"""Summary records: word counts, soft length warnings, retry behavior."""

import pytest

from constructpipe.corpus import CorpusUnit
from constructpipe.gateway import GatewayClient, load_stage_templates
from constructpipe.kinds import LengthSpec, get_kind
from constructpipe.summarize import (
    LONG_KIND,
    SHORT_KIND,
    length_warning,
    summarize_unit,
    word_count,
)

from helpers import ScriptedBackend

TEMPLATES = load_stage_templates("frames_sentence")
SHORT_SPEC = get_kind("frames_sentence").short_summary_spec  # 3-10 words
LONG_SPEC = get_kind("frames_sentence").long_summary_spec  # <= 2 sentences


def make_unit():
    return CorpusUnit(
        unit_id="doc-00001:0",
        doc_id="doc-00001",
        ordinal=0,
        granularity="sentence",
        text="Critics say the policy will push rents beyond reach.",
        title="Housing fight",
    )


def make_client(replies):
    return GatewayClient(ScriptedBackend(replies), backoff_base=0.0, sleep=lambda s: None)


@pytest.mark.parametrize(
    "text,expected",
    [
        ("one two three", 3),
        ("  padded   words  ", 2),
        ("single", 1),
        ("", 0),
        ("   ", 0),
    ],
)
def test_word_count(text, expected):
    assert word_count(text) == expected


def test_word_spec_bounds_are_inclusive():
    assert length_warning("three word summary", SHORT_SPEC) is None
    ten = " ".join(["word"] * 10)
    assert length_warning(ten, SHORT_SPEC) is None


def test_word_spec_below_minimum_warns():
    warning = length_warning("too short", SHORT_SPEC)
    assert warning == "summary has 2 words, below the 3-10 word spec"


def test_word_spec_above_maximum_warns():
    eleven = " ".join(["word"] * 11)
    warning = length_warning(eleven, SHORT_SPEC)
    assert warning == "summary has 11 words, above the 3-10 word spec"


def test_paragraph_spec_uses_its_own_range():
    spec = get_kind("frames_paragraph").short_summary_spec
    assert length_warning("seven words is not quite enough here", spec) == (
        "summary has 7 words, below the 8-16 word spec"
    )
    assert length_warning(" ".join(["w"] * 16), spec) is None


def test_sentence_spec_counts_sentences():
    assert length_warning("One idea. Another idea.", LONG_SPEC) is None
    warning = length_warning("One. Two. Three.", LONG_SPEC)
    assert warning == "summary has 3 sentences, above the 2-sentence spec"


def test_sentence_spec_respects_abbreviation_guard():
    text = "Dr. Ellis framed the cuts as betrayal. Residents agreed."
    assert length_warning(text, LONG_SPEC) is None


def test_summarize_unit_happy_path():
    client = make_client(["tax framed as small-business threat"])
    record = summarize_unit(
        client, TEMPLATES["summarize"], make_unit(), SHORT_KIND, SHORT_SPEC, "summarize", 3
    )

    assert record.unit_id == "doc-00001:0"
    assert record.kind == SHORT_KIND
    assert record.text == "tax framed as small-business threat"
    assert record.word_count == 5
    assert record.warning is None
    assert record.attempts == 1
    assert record.failed is False
    assert record.template_id == TEMPLATES["summarize"].ref
    payload = record.to_json()
    assert "failed" not in payload and "error" not in payload


def test_summarize_unit_strips_padding():
    client = make_client(["  rents framed as unaffordable burden \n"])
    record = summarize_unit(
        client, TEMPLATES["summarize"], make_unit(), SHORT_KIND, SHORT_SPEC, "summarize", 3
    )
    assert record.text == "rents framed as unaffordable burden"


def test_summarize_unit_stores_out_of_spec_text_with_warning():
    client = make_client(["terse"])
    record = summarize_unit(
        client, TEMPLATES["summarize"], make_unit(), SHORT_KIND, SHORT_SPEC, "summarize", 3
    )
    assert record.text == "terse"
    assert record.failed is False
    assert "below the 3-10 word spec" in record.warning


def test_summarize_unit_retries_empty_completions():
    client = make_client(["", "policy framed as rent crisis"])
    record = summarize_unit(
        client, TEMPLATES["summarize"], make_unit(), SHORT_KIND, SHORT_SPEC, "summarize", 3
    )
    assert record.text == "policy framed as rent crisis"
    assert record.attempts == 2
    # the resend is byte-identical: no corrective turn for an empty reply
    first = client.backend.calls[0][1]
    second = client.backend.calls[1][1]
    assert first == second


def test_summarize_unit_fails_when_every_completion_is_empty():
    client = make_client(["", "", ""])
    record = summarize_unit(
        client, TEMPLATES["summarize"], make_unit(), SHORT_KIND, SHORT_SPEC, "summarize", 3
    )
    assert record.failed is True
    assert record.error == "empty completion"
    assert record.text == ""
    assert record.word_count == 0
    payload = record.to_json()
    assert payload["failed"] is True
    assert payload["error"] == "empty completion"


def test_long_summary_uses_sentence_spec():
    reply = "The unit frames rents as a crisis. It blames the policy. It predicts flight."
    client = make_client([reply])
    record = summarize_unit(
        client,
        TEMPLATES["classify_summarize"],
        make_unit(),
        LONG_KIND,
        LONG_SPEC,
        "classify_summarize",
        3,
    )
    assert record.kind == LONG_KIND
    assert "above the 2-sentence spec" in record.warning
