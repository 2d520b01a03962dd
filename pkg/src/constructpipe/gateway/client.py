"""Gateway client: transport retries, run-store logging, and the bounded
re-ask loop used by every stage that must parse a completion.
"""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Any, Callable

from ..runstore import RunStore
from .backends import CompletionParams, TransientBackendError
from .templates import ChatMessage, messages_hash, messages_to_wire


class GatewayError(Exception):
    pass


class TransportExhausted(GatewayError):
    pass


class EmptyCompletionError(GatewayError):
    pass


class ParseFailure(Exception):
    """Raised by parse callbacks on content that cannot be used; triggers a re-ask."""


@dataclass
class AskResult:
    value: Any
    raw: str | None
    attempts: int
    error: str | None

    @property
    def ok(self) -> bool:
        return self.error is None


class GatewayClient:
    def __init__(
        self,
        backend,
        store: RunStore | None = None,
        params_by_stage: dict[str, CompletionParams] | None = None,
        transport_attempts: int = 3,
        backoff_base: float = 0.5,
        backoff_cap: float = 8.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if transport_attempts < 1:
            raise ValueError("transport_attempts must be at least 1")
        self.backend = backend
        self.store = store
        self.params_by_stage = params_by_stage or {}
        self.default_params = CompletionParams()
        self.transport_attempts = transport_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.sleep = sleep

    def params_for(self, stage: str) -> CompletionParams:
        return self.params_by_stage.get(stage, self.default_params)

    def _log(self, record: dict) -> None:
        if self.store is not None:
            self.store.append_event(record)

    def complete(self, stage: str, messages: list[ChatMessage]) -> str:
        """One ask: transport retries with exponential backoff, full logging.

        Exactly one request record per attempt; a response record only when
        the backend produced one. Empty completions are logged, then raised
        for the caller's re-ask policy to handle.
        """
        if not messages:
            raise GatewayError("messages must be non-empty")
        params = self.params_for(stage)
        mhash = messages_hash(messages)
        wire = messages_to_wire(messages)
        last_error: Exception | None = None
        for attempt in range(1, self.transport_attempts + 1):
            self._log(
                {
                    "type": "request",
                    "stage": stage,
                    "attempt": attempt,
                    "messages_hash": mhash,
                    "messages": wire,
                    "ts": time.time(),
                }
            )
            try:
                content, meta = self.backend.complete(stage, messages, params)
            except TransientBackendError as exc:
                last_error = exc
                self._log(
                    {
                        "type": "transport_error",
                        "stage": stage,
                        "attempt": attempt,
                        "messages_hash": mhash,
                        "error": str(exc),
                        "ts": time.time(),
                        **exc.meta,
                    }
                )
                if attempt < self.transport_attempts:
                    self.sleep(min(self.backoff_cap, self.backoff_base * (2 ** (attempt - 1))))
                continue
            self._log(
                {
                    "type": "response",
                    "stage": stage,
                    "attempt": attempt,
                    "messages_hash": mhash,
                    "content": content,
                    "content_hash": hashlib.sha256(content.encode("utf-8")).hexdigest(),
                    "ts": time.time(),
                    **meta,
                }
            )
            if not content.strip():
                raise EmptyCompletionError(f"empty completion (stage {stage})")
            return content
        raise TransportExhausted(
            f"transport failed after {self.transport_attempts} attempts (stage {stage}): {last_error}"
        )

    def ask_parsed(
        self,
        stage: str,
        messages: list[ChatMessage],
        parse: Callable[[str], Any],
        reask_text: str,
        max_attempts: int,
    ) -> AskResult:
        """Ask until ``parse`` accepts the reply or attempts run out.

        A parse failure appends the offending reply plus a terse corrective
        user turn and asks again; an empty completion resends the exchange
        unchanged (there is no assistant turn to append). A failed result
        marks the unit failed for this stage; it never aborts the run.
        """
        convo = list(messages)
        raw: str | None = None
        error: str | None = None
        for attempt in range(1, max_attempts + 1):
            try:
                raw = self.complete(stage, convo)
            except EmptyCompletionError:
                error = "empty completion"
                raw = None
                continue
            except TransportExhausted as exc:
                return AskResult(value=None, raw=raw, attempts=attempt, error=str(exc))
            try:
                value = parse(raw)
            except ParseFailure as exc:
                error = str(exc)
                convo = convo + [
                    ChatMessage(role="assistant", content=raw),
                    ChatMessage(role="user", content=reask_text),
                ]
                continue
            return AskResult(value=value, raw=raw, attempts=attempt, error=None)
        return AskResult(value=None, raw=raw, attempts=max_attempts, error=error or "exhausted")
