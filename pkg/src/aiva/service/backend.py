"""Pluggable reply backends: a deterministic stub and a generic
chat-completion HTTP client."""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass

import httpx

from ..epe import extract_prefix_sentiment

_THINKING_RE = re.compile(r"<thinking>.*?</thinking>", re.DOTALL | re.IGNORECASE)

_STUB_PHRASES = (
    "Thank you for telling me — I'm right here with you.",
    "That really comes through in your words. Want to talk it over?",
    "I appreciate you sharing that with me.",
    "I'm listening. Tell me more about what led up to this.",
    "Whatever comes next, we can think it through together.",
    "It means a lot that you'd share this moment with me.",
)


class BackendError(Exception):
    """A reply backend failed; ``retryable`` hints whether trying again
    might help (timeouts, network trouble, 5xx)."""

    def __init__(self, message: str, retryable: bool = False, status: int | None = None):
        super().__init__(message)
        self.retryable = retryable
        self.status = status


@dataclass
class LlmBackend:
    """Backend selection: "stub" needs nothing; "http" posts a
    chat-completion request to ``endpoint``."""
    mode: str = "stub"
    endpoint: str = ""
    model: str = ""
    api_key: str = ""
    timeout: float = 30.0

    def __post_init__(self):
        if self.mode not in ("stub", "http"):
            raise ValueError(f"unknown backend mode {self.mode!r}")
        if self.mode == "http" and not self.endpoint:
            raise ValueError("http backend requires an endpoint")

    @classmethod
    def from_env(cls, env=os.environ) -> "LlmBackend":
        return cls(
            mode=env.get("AIVA_LLM_MODE", "stub"),
            endpoint=env.get("AIVA_LLM_ENDPOINT", ""),
            model=env.get("AIVA_LLM_MODEL", ""),
            api_key=env.get("AIVA_LLM_API_KEY", ""),
            timeout=float(env.get("AIVA_LLM_TIMEOUT", "30")),
        )


def strip_thinking(text: str) -> str:
    """Drop any <thinking>...</thinking> block a backend may emit."""
    return _THINKING_RE.sub("", text).strip()


def _stub_reply(prompt: str) -> str:
    sentiment = extract_prefix_sentiment(prompt) or "something"
    digest = hashlib.sha256(prompt.encode("utf-8")).digest()
    phrase = _STUB_PHRASES[digest[0] % len(_STUB_PHRASES)]
    return f"It sounds like you're feeling {sentiment}. {phrase}"


def _http_reply(prompt: str, backend: LlmBackend) -> str:
    headers = {"Content-Type": "application/json"}
    if backend.api_key:
        headers["Authorization"] = f"Bearer {backend.api_key}"
    payload = {
        "model": backend.model or "default",
        "messages": [{"role": "user", "content": prompt}],
    }
    try:
        resp = httpx.post(backend.endpoint, json=payload, headers=headers,
                          timeout=backend.timeout)
    except httpx.TimeoutException as e:
        raise BackendError(f"backend timeout: {e}", retryable=True) from None
    except httpx.HTTPError as e:
        raise BackendError(f"backend unreachable: {e}", retryable=True) from None
    if resp.status_code >= 400:
        raise BackendError(f"backend returned HTTP {resp.status_code}",
                           retryable=resp.status_code >= 500 or resp.status_code == 429,
                           status=resp.status_code)
    try:
        body = resp.json()
        text = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as e:
        raise BackendError(f"malformed backend response: {e}", retryable=False,
                           status=resp.status_code) from None
    if not isinstance(text, str):
        raise BackendError("malformed backend response: content is not text",
                           retryable=False, status=resp.status_code)
    return text


def llm_complete(prompt: str, backend: LlmBackend) -> str:
    """Produce the reply text for a rendered prompt.

    The stub is a pure function of the prompt bytes; http mode posts a
    chat-completion request and returns the first message. Internal
    reasoning blocks are stripped either way.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    if backend.mode == "stub":
        return strip_thinking(_stub_reply(prompt))
    return strip_thinking(_http_reply(prompt, backend))
