"""Prompt template parsing, rendering, and the exact-cover binding rule."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from constructpipe.gateway.templates import (
    STAGES,
    ChatMessage,
    TemplateError,
    builtin_stages,
    canonical_key,
    find_placeholders,
    load_builtin,
    load_stage_templates,
    messages_from_wire,
    messages_to_wire,
    parse_template,
    render,
    rendered_text,
)

SAMPLE = """id: demo/one
stage: summarize
--- system
You are a careful reader.
--- user
Title: [TITLE]

Text: [SENTENCE]
"""


def test_parse_sections_and_placeholders():
    t = parse_template(SAMPLE, "inline")
    assert t.template_id == "demo/one"
    assert t.stage == "summarize"
    assert [m.role for m in t.messages] == ["system", "user"]
    assert t.placeholders == {"TITLE", "SENTENCE"}
    assert t.ref == f"demo/one@{t.content_hash[:12]}"


def test_parse_requires_system_first():
    bad = SAMPLE.replace("--- system", "--- user", 1)
    with pytest.raises(TemplateError):
        parse_template(bad, "inline")


def test_parse_rejects_empty_section():
    bad = "id: x\nstage: summarize\n--- system\n\n--- user\nhas text\n"
    with pytest.raises(TemplateError):
        parse_template(bad, "inline")


def test_render_exact_cover():
    t = parse_template(SAMPLE, "inline")
    messages = render(t, {"TITLE": "Budget", "SENTENCE": "Costs rose."})
    assert messages[1].content == "Title: Budget\n\nText: Costs rose."

    with pytest.raises(TemplateError, match="SENTENCE"):
        render(t, {"TITLE": "Budget"})
    with pytest.raises(TemplateError, match="EXTRA"):
        render(t, {"TITLE": "B", "SENTENCE": "C", "EXTRA": "nope"})


def test_render_is_single_pass():
    t = parse_template(SAMPLE, "inline")
    messages = render(t, {"TITLE": "[SENTENCE]", "SENTENCE": "plain"})
    # A substituted value must never be rescanned for placeholders.
    assert "Title: [SENTENCE]" in messages[1].content
    assert "Text: plain" in messages[1].content


def test_placeholder_regex_stays_on_one_line():
    assert find_placeholders("a [NAME] b") == {"NAME"}
    assert find_placeholders("a [NA\nME] b") == set()
    assert find_placeholders('{"frame-categories": [\n  {"frame": "x"}\n]}') == set()


def test_canonical_key_case_and_space():
    assert canonical_key(" title ") == "TITLE"
    t = parse_template(SAMPLE, "inline")
    messages = render(t, {"title": "Low", "Sentence": "Case."})
    assert "Title: Low" in messages[1].content


def test_binding_key_collision_rejected():
    t = parse_template(SAMPLE, "inline")
    with pytest.raises(TemplateError):
        render(t, {"TITLE": "a", "title": "b", "SENTENCE": "c"})


@settings(max_examples=100, deadline=None)
@given(
    st.sets(st.sampled_from(["TITLE", "SENTENCE", "THOUGHTS", "EXTRA"]), max_size=4),
)
def test_render_agrees_with_placeholder_cover(bound):
    t = parse_template(SAMPLE, "inline")
    bindings = {name: "x" for name in bound}
    if bound == t.placeholders:
        assert render(t, bindings)
    else:
        with pytest.raises(TemplateError):
            render(t, bindings)


def test_chat_message_rejects_blank_content():
    with pytest.raises(TemplateError):
        ChatMessage(role="user", content="   ")
    with pytest.raises(TemplateError):
        ChatMessage(role="narrator", content="hi")


def test_wire_roundtrip():
    msgs = [ChatMessage("system", "a"), ChatMessage("user", "b")]
    assert messages_from_wire(messages_to_wire(msgs)) == msgs
    assert rendered_text(msgs) == "system: a\nuser: b"


def test_builtin_stage_sets_per_kind():
    assert set(builtin_stages("topics")) == {
        s for s in STAGES if not s.startswith("detect")
    }
    assert set(builtin_stages("frames_sentence")) == set(STAGES)
    assert set(builtin_stages("frames_paragraph")) == set(STAGES)


def test_detection_template_carries_framing_definition():
    t = load_builtin("frames_sentence", "detect_1")
    system = t.messages[0].content
    assert "promote a particular problem definition" in system
    assert "causal interpretation, moral evaluation" in system
    assert t.placeholders == {"TITLE", "SENTENCE"}


def test_fit_templates_keep_the_exact_reply_format_line():
    frames = load_builtin("frames_sentence", "classify_fit")
    topics = load_builtin("topics", "classify_fit")
    frames_text = "\n".join(m.content for m in frames.messages)
    topics_text = "\n".join(m.content for m in topics.messages)
    # The no-space quirk after "<Number>", is part of the published format.
    assert '"Fit": "<Number>","Frame": "<Frame Name>"' in frames_text
    assert '"Fit": "<Number>","Topic": "<Topic Name>"' in topics_text
    assert "- 3: Slightly Disagree" in frames_text
    assert "- 5: Slightly Agree" in frames_text


def test_override_dir_wins(tmp_path):
    override = tmp_path / "frames_sentence"
    override.mkdir(parents=True)
    (override / "summarize.prompt").write_text(
        "id: custom/sum\nstage: summarize\n--- system\nShorter.\n--- user\n[SENTENCE]\n",
        encoding="utf-8",
    )
    templates = load_stage_templates("frames_sentence", tmp_path)
    assert templates["summarize"].template_id == "custom/sum"
    assert templates["detect_1"].template_id == "frames_sentence/detect_1"
