"""Prompt templates: a small file format, placeholder extraction, and rendering.

A template file is a short header followed by role sections:

    id: frames_sentence/detect_1
    stage: detect_1
    --- system
    <text>
    --- user
    <text>

Sections appear in message order and may repeat (a chain that replays an
earlier exchange lists system, user, assistant, user). Placeholders are
bracketed names like [SENTENCE] that do not span lines; names are
canonicalized by trim+uppercase, so [Title] and [TITLE] are the same slot.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

ROLES = ("system", "user", "assistant")

STAGES = (
    "detect_1",
    "detect_2",
    "summarize",
    "classgen",
    "classify_summarize",
    "classify_fit",
    "classify_final",
)

PLACEHOLDER_RE = re.compile(r"\[([^\[\]\n]+)\]")

_SECTION_RE = re.compile(r"^--- (\w+)\s*$")


class TemplateError(Exception):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise TemplateError(f"unknown role: {self.role!r}")
        if not self.content.strip():
            raise TemplateError("message content must be non-empty")


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    stage: str
    messages: tuple[ChatMessage, ...]
    placeholders: frozenset[str]
    content_hash: str = ""

    def __post_init__(self):
        if self.stage not in STAGES:
            raise TemplateError(f"unknown stage: {self.stage!r}")
        if not self.messages:
            raise TemplateError(f"template {self.template_id}: no messages")
        if self.messages[0].role != "system":
            raise TemplateError(f"template {self.template_id}: first message must be system")

    @property
    def ref(self) -> str:
        """Identity string stored in stage records: id plus a short content hash."""
        return f"{self.template_id}@{self.content_hash[:12]}"


def canonical_key(name: str) -> str:
    return name.strip().upper()


def find_placeholders(text: str) -> set[str]:
    return {canonical_key(m) for m in PLACEHOLDER_RE.findall(text)}


def parse_template(text: str, source: str = "<string>") -> PromptTemplate:
    header: dict[str, str] = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and not _SECTION_RE.match(lines[i]):
        line = lines[i].strip()
        i += 1
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise TemplateError(f"{source}: bad header line: {line!r}")
        key, _, value = line.partition(":")
        header[key.strip()] = value.strip()

    messages: list[ChatMessage] = []
    while i < len(lines):
        m = _SECTION_RE.match(lines[i])
        if not m:
            raise TemplateError(f"{source}: expected section marker, got {lines[i]!r}")
        role = m.group(1)
        i += 1
        body_lines: list[str] = []
        while i < len(lines) and not _SECTION_RE.match(lines[i]):
            body_lines.append(lines[i])
            i += 1
        body = "\n".join(body_lines).strip("\n")
        if not body.strip():
            raise TemplateError(f"{source}: empty {role} section")
        messages.append(ChatMessage(role=role, content=body))

    if "id" not in header:
        raise TemplateError(f"{source}: missing 'id' header")
    if "stage" not in header:
        raise TemplateError(f"{source}: missing 'stage' header")
    placeholders = frozenset().union(*[find_placeholders(m.content) for m in messages]) if messages else frozenset()
    return PromptTemplate(
        template_id=header["id"],
        stage=header["stage"],
        messages=tuple(messages),
        placeholders=placeholders,
        content_hash=hashlib.sha256(text.encode("utf-8")).hexdigest(),
    )


def load_template(path: str | Path) -> PromptTemplate:
    path = Path(path)
    return parse_template(path.read_text("utf-8"), source=str(path))


def builtin_stages(pipeline_kind: str) -> list[str]:
    root = resources.files("constructpipe").joinpath(f"prompts/{pipeline_kind}")
    return sorted(p.name[: -len(".prompt")] for p in root.iterdir() if p.name.endswith(".prompt"))


def load_builtin(pipeline_kind: str, stage: str) -> PromptTemplate:
    res = resources.files("constructpipe").joinpath(f"prompts/{pipeline_kind}/{stage}.prompt")
    try:
        text = res.read_text("utf-8")
    except FileNotFoundError:
        raise TemplateError(f"no builtin template for {pipeline_kind}/{stage}") from None
    return parse_template(text, source=f"builtin:{pipeline_kind}/{stage}")


def load_stage_templates(pipeline_kind: str, override_dir: str | Path | None = None) -> dict[str, PromptTemplate]:
    """All templates for a pipeline kind, preferring files in ``override_dir``."""
    templates: dict[str, PromptTemplate] = {}
    for stage in builtin_stages(pipeline_kind):
        override = Path(override_dir) / pipeline_kind / f"{stage}.prompt" if override_dir else None
        if override is not None and override.is_file():
            templates[stage] = load_template(override)
        else:
            templates[stage] = load_builtin(pipeline_kind, stage)
    return templates


def render(template: PromptTemplate, bindings: dict[str, str]) -> list[ChatMessage]:
    """Substitute placeholder bindings into the template's messages.

    Bindings must cover the placeholder set exactly: a missing binding and an
    unknown binding are both errors (the latter catches typos). Substitution
    is verbatim and single-pass, so corpus text containing bracketed spans is
    never treated as a placeholder.
    """
    canon = {canonical_key(k): v for k, v in bindings.items()}
    if len(canon) != len(bindings):
        raise TemplateError("bindings collide after canonicalization")
    missing = template.placeholders - set(canon)
    if missing:
        raise TemplateError(f"missing placeholder binding: {', '.join(sorted(missing))}")
    unknown = set(canon) - template.placeholders
    if unknown:
        raise TemplateError(f"unknown placeholder in bindings: {', '.join(sorted(unknown))}")

    def substitute(match: re.Match) -> str:
        return canon[canonical_key(match.group(1))]

    return [
        ChatMessage(role=m.role, content=PLACEHOLDER_RE.sub(substitute, m.content))
        for m in template.messages
    ]


def messages_to_wire(messages: list[ChatMessage]) -> list[dict[str, str]]:
    return [{"role": m.role, "content": m.content} for m in messages]


def messages_from_wire(raw: list[dict[str, str]]) -> list[ChatMessage]:
    return [ChatMessage(role=m["role"], content=m["content"]) for m in raw]


def rendered_text(messages: list[ChatMessage]) -> str:
    """Canonical flat text of an exchange, used for mock matching and hashing."""
    return "\n".join(f"{m.role}: {m.content}" for m in messages)


def messages_hash(messages: list[ChatMessage]) -> str:
    return hashlib.sha256(rendered_text(messages).encode("utf-8")).hexdigest()
