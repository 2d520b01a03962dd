"""Extraction of a JSON object from model replies that ignore "ONLY valid JSON".

Repairs are applied in a fixed order, each building on the previous text:
strip a code fence, trim prose around the outermost braces, remove trailing
commas. After each step the text is parsed strictly; the first parse that
yields a top-level object wins. The function is a pure text transform with
no recursion and no guessing beyond those three repairs.
"""

from __future__ import annotations

import json
import re

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\s*\n?(.*?)```", re.DOTALL)


class JsonExtractionError(Exception):
    pass


def extract_json(raw: str) -> dict:
    attempts = []
    text = raw.strip()
    attempts.append(text)
    text = _strip_fence(text)
    attempts.append(text)
    text = _trim_prose(text)
    attempts.append(text)
    text = _remove_trailing_commas(text)
    attempts.append(text)

    for candidate in attempts:
        if not candidate:
            continue
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    raise JsonExtractionError("no JSON object found in reply")


def _strip_fence(text: str) -> str:
    m = _FENCE_RE.search(text)
    if m:
        return m.group(1).strip()
    return text


def _trim_prose(text: str) -> str:
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end == -1 or end < start:
        return text
    return text[start : end + 1]


def _remove_trailing_commas(text: str) -> str:
    """Drop commas that directly precede a closing brace/bracket, outside strings."""
    out = []
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            out.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
            out.append(ch)
            continue
        if ch == ",":
            j = i + 1
            while j < len(text) and text[j] in " \t\r\n":
                j += 1
            if j < len(text) and text[j] in "}]":
                continue
        out.append(ch)
    return "".join(out)
