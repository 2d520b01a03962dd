"""Uniform client for chat-completion endpoints (live, mock, or replay),
with prompt templating, bounded retries, and structured-output extraction.
"""

from .backends import (
    BackendError,
    CompletionParams,
    HttpBackend,
    MockBackend,
    ReplayBackend,
    TransientBackendError,
)
from .client import (
    AskResult,
    EmptyCompletionError,
    GatewayClient,
    GatewayError,
    ParseFailure,
    TransportExhausted,
)
from .jsonrepair import JsonExtractionError, extract_json
from .templates import (
    ChatMessage,
    PromptTemplate,
    TemplateError,
    canonical_key,
    load_builtin,
    load_stage_templates,
    load_template,
    messages_hash,
    parse_template,
    render,
    rendered_text,
)

__all__ = [
    "AskResult",
    "BackendError",
    "ChatMessage",
    "CompletionParams",
    "EmptyCompletionError",
    "GatewayClient",
    "GatewayError",
    "HttpBackend",
    "JsonExtractionError",
    "MockBackend",
    "ParseFailure",
    "PromptTemplate",
    "ReplayBackend",
    "TemplateError",
    "TransientBackendError",
    "TransportExhausted",
    "canonical_key",
    "extract_json",
    "load_builtin",
    "load_stage_templates",
    "load_template",
    "messages_hash",
    "parse_template",
    "render",
    "rendered_text",
]
