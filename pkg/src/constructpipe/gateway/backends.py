"""Completion backends: live HTTP endpoint, scripted mock, and log replay.

All three expose ``complete(stage, messages, params) -> (text, meta)`` where
``meta`` is a small dict the caller writes into the run log (mock entry
indices are what make interrupted runs resumable with sequenced fixtures).
"""

from __future__ import annotations

import json
import re
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import requests

from .templates import STAGES, ChatMessage, messages_hash, messages_to_wire, rendered_text


class BackendError(Exception):
    def __init__(self, message: str, meta: dict | None = None):
        super().__init__(message)
        self.meta = meta or {}


class TransientBackendError(BackendError):
    """Worth retrying: connection trouble, timeouts, throttling, 5xx."""


@dataclass(frozen=True)
class CompletionParams:
    temperature: float = 0.0
    max_output_tokens: int = 1024
    seed: int | None = None
    endpoint_profile: str = "mock"

    def __post_init__(self):
        if self.temperature < 0 or self.temperature > 2.0:
            raise ValueError("temperature must be in [0, 2.0]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


class HttpBackend:
    """Chat-completion endpoint speaking the prevailing open convention:
    POST {base_url}/chat/completions with model, messages, temperature.
    """

    def __init__(self, base_url: str, model: str, api_key: str = "", timeout: float = 60.0):
        if not base_url:
            raise ValueError("base_url required for the http endpoint profile")
        if not model:
            raise ValueError("model required for the http endpoint profile")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, stage: str, messages: list[ChatMessage], params: CompletionParams) -> tuple[str, dict]:
        body = {
            "model": self.model,
            "messages": messages_to_wire(messages),
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions", json=body, headers=headers, timeout=self.timeout
            )
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"endpoint status {resp.status_code}", meta={"status": resp.status_code})
        if resp.status_code != 200:
            raise BackendError(f"endpoint status {resp.status_code}: {resp.text[:200]}", meta={"status": resp.status_code})
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed endpoint response: {exc}") from exc
        if not isinstance(content, str):
            raise BackendError("malformed endpoint response: content is not text")
        return content, {"status": resp.status_code}


@dataclass
class MockEntry:
    stage: str
    pattern: re.Pattern
    replies: tuple[str, ...]
    fail_times: int = 0


class MockBackend:
    """Scripted backend driven by a fixture file.

    The fixture is a JSON list of entries {stage, match, reply|replies,
    fail_times}. For each request the entries are consulted in file order and
    the first whose stage matches and whose regex searches the rendered
    exchange wins. ``replies`` is served in sequence per entry (the last
    reply is sticky); the first ``fail_times`` hits raise a transient error.
    """

    def __init__(self, entries: list[MockEntry]):
        self.entries = entries
        self._counters = [0] * len(entries)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockBackend":
        raw = json.loads(Path(path).read_text("utf-8"))
        if not isinstance(raw, list):
            raise BackendError(f"mock fixture must be a JSON list: {path}")
        entries = []
        for i, obj in enumerate(raw):
            try:
                stage = obj["stage"]
                if stage not in STAGES:
                    raise KeyError(f"unknown stage {stage!r}")
                pattern = re.compile(obj["match"])
                if "replies" in obj:
                    replies = tuple(obj["replies"])
                else:
                    replies = (obj["reply"],)
                if not replies:
                    raise KeyError("replies")
                entries.append(
                    MockEntry(
                        stage=stage,
                        pattern=pattern,
                        replies=replies,
                        fail_times=int(obj.get("fail_times", 0)),
                    )
                )
            except (KeyError, re.error, TypeError) as exc:
                raise BackendError(f"mock fixture entry {i} invalid: {exc}") from exc
        return cls(entries)

    def prime(self, counters: dict[int, int]) -> None:
        """Restore per-entry serve counts recorded by an interrupted run."""
        for idx, count in counters.items():
            if 0 <= idx < len(self._counters):
                self._counters[idx] = count

    def complete(self, stage: str, messages: list[ChatMessage], params: CompletionParams) -> tuple[str, dict]:
        text = rendered_text(messages)
        for idx, entry in enumerate(self.entries):
            if entry.stage != stage or not entry.pattern.search(text):
                continue
            with self._lock:
                serve = self._counters[idx]
                self._counters[idx] += 1
            meta = {"mock_entry": idx, "mock_serve": serve}
            if serve < entry.fail_times:
                raise TransientBackendError(
                    f"scripted failure {serve + 1}/{entry.fail_times} (entry {idx})", meta=meta
                )
            reply_idx = min(serve - entry.fail_times, len(entry.replies) - 1)
            return entry.replies[reply_idx], meta
        raise BackendError(f"no mock fixture entry matches stage {stage!r}: {text[:160]!r}")


class ReplayBackend:
    """Serves responses recorded in a previous run's event log.

    Responses are queued FIFO per (stage, exchange hash), so repeated
    identical requests replay in their original order and re-asks (which have
    longer exchanges, hence different hashes) land on their own queues.
    """

    def __init__(self, events: list[dict]):
        self._queues: dict[tuple[str, str], deque[str]] = {}
        for ev in events:
            if ev.get("type") != "response":
                continue
            key = (ev["stage"], ev["messages_hash"])
            self._queues.setdefault(key, deque()).append(ev["content"])
        self._lock = threading.Lock()

    def complete(self, stage: str, messages: list[ChatMessage], params: CompletionParams) -> tuple[str, dict]:
        key = (stage, messages_hash(messages))
        with self._lock:
            queue = self._queues.get(key)
            if not queue:
                raise BackendError(
                    f"no recorded response to replay for stage {stage!r} "
                    f"(exchange hash {key[1][:12]})"
                )
            content = queue.popleft()
        return content, {"replayed": True}
