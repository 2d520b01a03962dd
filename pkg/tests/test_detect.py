"""Two-interaction detection: reply normalization and the unit-level flow."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from constructpipe.corpus import CorpusUnit
from constructpipe.detect import REASK_TEXT, detect_unit, parse_yes_no, unit_context
from constructpipe.gateway import GatewayClient, ParseFailure, load_stage_templates, render
from constructpipe.gateway.backends import TransientBackendError

from helpers import ScriptedBackend

TEMPLATES = load_stage_templates("frames_sentence")


def make_unit(text="The mayor said the new tax will devastate small businesses.", ordinal=0):
    return CorpusUnit(
        unit_id=f"doc-00001:{ordinal}",
        doc_id="doc-00001",
        ordinal=ordinal,
        granularity="sentence",
        text=text,
        title="City budget debate",
    )


def make_client(replies, transport_attempts=3):
    return GatewayClient(
        ScriptedBackend(replies),
        transport_attempts=transport_attempts,
        backoff_base=0.0,
        sleep=lambda s: None,
    )


@pytest.mark.parametrize(
    "raw,expected",
    [
        ("Yes", "yes"),
        ("yes.", "yes"),
        ("  YES  ", "yes"),
        ("Yes, the sentence promotes a causal reading.", "yes"),
        ("No", "no"),
        ("No.", "no"),
        ("nO", "no"),
        ("No - it reads as a plain factual statement.", "no"),
    ],
)
def test_parse_yes_no_accepts(raw, expected):
    assert parse_yes_no(raw) == expected


@pytest.mark.parametrize(
    "raw",
    [
        "Yes and no",
        "no, although arguably yes",
        "Maybe",
        "I think yes",
        "The answer is no",
        "",
        "   ",
        "123 456",
        "?!",
    ],
)
def test_parse_yes_no_rejects(raw):
    with pytest.raises(ParseFailure):
        parse_yes_no(raw)


@given(st.text(alphabet="yesno YESNO.,", max_size=30))
def test_parse_yes_no_domain(raw):
    try:
        first = parse_yes_no(raw)
    except ParseFailure:
        return
    assert first in ("yes", "no")
    assert parse_yes_no(raw) == first


def test_detect_unit_yes_path():
    thoughts = "The sentence assigns blame and projects a consequence."
    backend_replies = [thoughts, "Yes"]
    client = make_client(backend_replies)
    unit = make_unit()

    record = detect_unit(client, TEMPLATES["detect_1"], TEMPLATES["detect_2"], unit, max_attempts=3)

    assert record.status == "yes"
    assert record.thoughts == thoughts
    assert record.attempts == 1
    assert record.error is None
    assert record.stage_template_ids == (TEMPLATES["detect_1"].ref, TEMPLATES["detect_2"].ref)
    assert "error" not in record.to_json()

    stages = [stage for stage, _ in client.backend.calls]
    assert stages == ["detect_1", "detect_2"]
    second_text = "\n".join(m.content for m in client.backend.calls[1][1])
    assert thoughts in second_text
    assert unit.text in second_text


def test_detect_unit_no_path():
    client = make_client(["Plain reporting of an event.", "No"])
    record = detect_unit(client, TEMPLATES["detect_1"], TEMPLATES["detect_2"], make_unit(), 3)
    assert record.status == "no"
    assert record.error is None


def test_detect_unit_reasks_on_unparseable_answer():
    client = make_client(["thoughts", "It could go either way", "No"])
    record = detect_unit(client, TEMPLATES["detect_1"], TEMPLATES["detect_2"], make_unit(), max_attempts=2)

    assert record.status == "no"
    assert record.attempts == 2
    third_call = client.backend.calls[2][1]
    assert third_call[-2].role == "assistant"
    assert third_call[-2].content == "It could go either way"
    assert third_call[-1].role == "user"
    assert third_call[-1].content == REASK_TEXT


def test_detect_unit_reasks_on_ambiguous_answer():
    client = make_client(["thoughts", "Yes and no", "Yes"])
    record = detect_unit(client, TEMPLATES["detect_1"], TEMPLATES["detect_2"], make_unit(), max_attempts=2)
    assert record.status == "yes"
    assert record.attempts == 2


def test_detect_unit_fails_after_reask_cap_without_coercion():
    client = make_client(["thoughts kept verbatim", "Hard to say", "Unclear"])
    record = detect_unit(client, TEMPLATES["detect_1"], TEMPLATES["detect_2"], make_unit(), max_attempts=2)

    assert record.status == "failed"
    assert record.thoughts == "thoughts kept verbatim"
    assert record.error.startswith("interaction two:")
    assert record.to_json()["error"] == record.error


def test_detect_unit_fails_when_thoughts_stay_empty():
    client = make_client(["", "", ""])
    record = detect_unit(client, TEMPLATES["detect_1"], TEMPLATES["detect_2"], make_unit(), max_attempts=3)

    assert record.status == "failed"
    assert record.thoughts == ""
    assert record.error == "interaction one: empty completion"
    # interaction two never ran
    assert all(stage == "detect_1" for stage, _ in client.backend.calls)


def test_detect_unit_fails_on_transport_exhaustion():
    boom = TransientBackendError("connection reset")
    client = make_client([boom, TransientBackendError("connection reset")], transport_attempts=2)
    record = detect_unit(client, TEMPLATES["detect_1"], TEMPLATES["detect_2"], make_unit(), max_attempts=3)

    assert record.status == "failed"
    assert "interaction one" in record.error
    assert "transport failed after 2 attempts" in record.error


def test_unit_context_filters_to_template_placeholders():
    unit = make_unit()
    ctx = unit_context(unit, TEMPLATES["detect_1"])
    assert ctx == {"TITLE": unit.title, "SENTENCE": unit.text}

    ctx2 = unit_context(unit, TEMPLATES["detect_2"], {"THOUGHTS": "t", "UNUSED": "x"})
    assert ctx2 == {"TITLE": unit.title, "SENTENCE": unit.text, "THOUGHTS": "t"}
    # render accepts the filtered bindings without exact-cover complaints
    render(TEMPLATES["detect_2"], ctx2)


@given(
    st.lists(
        st.sampled_from(["Yes", "No", "Maybe", "", "Yes and no", "thoughts here"]),
        min_size=4,
        max_size=4,
    )
)
def test_detect_unit_status_partition(replies):
    client = make_client(replies)
    record = detect_unit(client, TEMPLATES["detect_1"], TEMPLATES["detect_2"], make_unit(), max_attempts=2)

    assert record.status in ("yes", "no", "failed")
    assert (record.error is None) == (record.status in ("yes", "no"))
    if record.status in ("yes", "no"):
        assert record.thoughts != ""
