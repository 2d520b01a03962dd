"""Corpus ingestion and segmentation into identified analytical units.

Documents come from a delimited table, a JSON-lines file, or a directory of
plain-text files. Segmentation is rule-based and deterministic: the same
(body, granularity) always yields the same unit list, and unit ids are a pure
function of (doc_id, ordinal).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)

GRANULARITIES = ("sentence", "paragraph", "full_text")

INGEST_FORMATS = ("delimited_table", "json_lines", "plain_dir")

_PARAGRAPH_SPLIT = re.compile(r"\n\s*\n")

# Characters that may trail terminal punctuation and still belong to the
# sentence (closing quotes and brackets).
_TRAILING = "\"')]’”"

_OPENERS = "\"'(‘“"


class CorpusError(Exception):
    pass


class DuplicateDocIdError(CorpusError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.doc_id:
            raise CorpusError("doc_id must be non-empty")
        if not self.body.strip():
            raise CorpusError("body must be non-empty")


@dataclass(frozen=True)
class CorpusUnit:
    unit_id: str
    doc_id: str
    ordinal: int
    granularity: str
    text: str
    title: str


def unit_id_for(doc_id: str, ordinal: int) -> str:
    """Unit ids are a pure function of (doc_id, ordinal)."""
    return f"{doc_id}:{ordinal}"


def default_abbreviations() -> frozenset[str]:
    """Abbreviation guard list shipped with the package (lowercase, no dot)."""
    text = resources.files("constructpipe").joinpath("data/abbreviations.txt").read_text("utf-8")
    return _parse_abbreviations(text)


def load_abbreviations(path: str | Path) -> frozenset[str]:
    return _parse_abbreviations(Path(path).read_text("utf-8"))


def _parse_abbreviations(text: str) -> frozenset[str]:
    entries = set()
    for line in text.splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            entries.add(line.rstrip("."))
    return frozenset(entries)


def ingest(path: str | Path, format: str) -> list[Document]:
    """Read documents from ``path``.

    Records with an empty body are skipped with a logged warning. Duplicate
    doc ids are fatal. Records without an id get one assigned from their
    position in the input order.
    """
    path = Path(path)
    if format not in INGEST_FORMATS:
        raise CorpusError(f"unknown ingest format: {format!r}")
    if format == "plain_dir":
        if not path.is_dir():
            raise CorpusError(f"not a directory: {path}")
        records = _iter_plain_dir(path)
    elif format == "delimited_table":
        records = _iter_delimited(path)
    else:
        records = _iter_json_lines(path)

    docs: list[Document] = []
    seen: set[str] = set()
    for ordinal, (doc_id, title, body, metadata) in enumerate(records):
        if not doc_id:
            doc_id = f"doc-{ordinal:05d}"
        if doc_id in seen:
            raise DuplicateDocIdError(f"duplicate doc_id: {doc_id!r}")
        if not body or not body.strip():
            log.warning("skipping record %r: empty body", doc_id)
            continue
        seen.add(doc_id)
        docs.append(Document(doc_id=doc_id, title=title, body=body, metadata=metadata))
    return docs


def _iter_delimited(path: Path):
    if not path.is_file():
        raise CorpusError(f"unreadable file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise CorpusError(f"missing header row: {path}")
        fields = [f.strip() for f in reader.fieldnames]
        if "text" not in fields:
            raise CorpusError(f"header must contain a 'text' column: {path}")
        for row in reader:
            row = {(k or "").strip(): (v or "") for k, v in row.items()}
            doc_id = row.pop("id", "").strip()
            title = row.pop("title", "").strip()
            body = row.pop("text", "")
            yield doc_id, title, body, {k: v for k, v in row.items() if v}


def _iter_json_lines(path: Path):
    if not path.is_file():
        raise CorpusError(f"unreadable file: {path}")
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON line: {exc}") from exc
            doc_id = str(obj.get("id", "") or "").strip()
            title = str(obj.get("title", "") or "")
            body = str(obj.get("text", "") or "")
            metadata = {
                k: str(v)
                for k, v in obj.items()
                if k not in ("id", "title", "text") and v is not None
            }
            yield doc_id, title, body, metadata


def _iter_plain_dir(path: Path):
    for file in sorted(path.glob("*.txt")):
        yield file.stem, "", file.read_text("utf-8"), {"source": file.name}


def segment(doc: Document, granularity: str, abbreviations: frozenset[str] | None = None) -> list[CorpusUnit]:
    """Split a document into units at the given granularity.

    full_text yields exactly one unit, paragraph splits on blank lines,
    sentence uses a rule-based splitter with an abbreviation guard list.
    Empty segments are dropped; ordinals have no gaps.
    """
    if granularity not in GRANULARITIES:
        raise CorpusError(f"unknown granularity: {granularity!r}")
    if granularity == "full_text":
        pieces = [doc.body.strip()]
    elif granularity == "paragraph":
        pieces = [p.strip() for p in _PARAGRAPH_SPLIT.split(doc.body)]
    else:
        if abbreviations is None:
            abbreviations = default_abbreviations()
        pieces = split_sentences(doc.body, abbreviations)

    units = []
    for text in pieces:
        if not text:
            continue
        ordinal = len(units)
        units.append(
            CorpusUnit(
                unit_id=unit_id_for(doc.doc_id, ordinal),
                doc_id=doc.doc_id,
                ordinal=ordinal,
                granularity=granularity,
                text=text,
                title=doc.title,
            )
        )
    return units


def split_sentences(text: str, abbreviations: frozenset[str]) -> list[str]:
    """Rule-based sentence splitting: terminal punctuation plus a guard list.

    A run of .!? ends a sentence when followed by whitespace and an
    uppercase letter, digit, or opening quote (or end of text), unless the
    word before a period is a known abbreviation or part of a decimal number.
    """
    sentences: list[str] = []
    buf: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        buf.append(ch)
        if ch in ".!?":
            j = i + 1
            while j < n and text[j] in ".!?" + _TRAILING:
                buf.append(text[j])
                j += 1
            if _is_boundary(text, i, j, abbreviations):
                sentence = "".join(buf).strip()
                if sentence:
                    sentences.append(sentence)
                buf = []
            i = j
            continue
        i += 1
    tail = "".join(buf).strip()
    if tail:
        sentences.append(tail)
    return sentences


def _is_boundary(text: str, punct_idx: int, next_idx: int, abbreviations: frozenset[str]) -> bool:
    if next_idx >= len(text):
        return True
    if not text[next_idx].isspace():
        # mid-token punctuation: decimals ("3.14"), urls, "e.g.x"
        return False
    k = next_idx
    while k < len(text) and text[k].isspace():
        k += 1
    if k >= len(text):
        return True
    nxt = text[k]
    if nxt.islower():
        return False
    if text[punct_idx] == "." and _word_before(text, punct_idx).lower() in abbreviations:
        return False
    if nxt.isupper() or nxt.isdigit() or nxt in _OPENERS:
        return True
    return True


def _word_before(text: str, idx: int) -> str:
    """Token immediately preceding the period at ``idx`` (dots allowed, e.g. "e.g")."""
    end = idx
    start = end
    while start > 0 and (text[start - 1].isalnum() or text[start - 1] in ".-"):
        start -= 1
    return text[start:end].strip(".")


def estimate_tokens(text: str, chars_per_token: int = 4) -> int:
    """Approximate token count: ceil(len/chars_per_token), at least 1 for non-empty text."""
    if not text:
        return 0
    return max(1, math.ceil(len(text) / chars_per_token))


def token_guard(unit: CorpusUnit, limit: int, chars_per_token: int = 4) -> str:
    """Return "ok" or "over_limit" for a unit against a context-window limit.

    The guard is conservative: a unit whose estimate reaches the limit is
    already at risk because the character heuristic undercounts, so the
    comparison is >= rather than >.
    """
    if limit <= 0:
        raise CorpusError("token limit must be positive")
    return "over_limit" if estimate_tokens(unit.text, chars_per_token) >= limit else "ok"
