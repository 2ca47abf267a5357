from .gateway import (
    BackendConfig,
    Cassette,
    CassetteMode,
    Exchange,
    Gateway,
    HttpChatTransport,
    HttpError,
    LLMTimeout,
    RateLimiter,
    ReplayMiss,
    Reply,
    format_diagnostics,
    request_digest,
)
from .templates import TemplateError, render_template, template_ids

__all__ = [
    "BackendConfig", "Cassette", "CassetteMode", "Exchange", "Gateway",
    "HttpChatTransport", "HttpError", "LLMTimeout", "RateLimiter", "ReplayMiss",
    "Reply", "TemplateError", "format_diagnostics", "render_template",
    "request_digest", "template_ids",
]
