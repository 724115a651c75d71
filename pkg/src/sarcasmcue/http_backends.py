"""OpenAI-style and Anthropic-style HTTP backends.

Both share retry with exponential backoff and an in-flight request bound.
Credentials are read from the environment variable named in the profile.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from contextlib import contextmanager
from typing import Callable

import httpx

from .backend import (
    AuthError,
    Backend,
    BackendUnavailable,
    ChatRequest,
    ChatResponse,
    EmbeddingVector,
    MalformedResponse,
    RateLimited,
)

log = logging.getLogger(__name__)


class RateLimiter:
    """Caps concurrent upstream requests at *max_in_flight*."""

    def __init__(self, max_in_flight: int = 4):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.max_in_flight = max_in_flight
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self.in_flight = 0
        self.peak = 0

    @contextmanager
    def slot(self):
        with self._sem:
            with self._lock:
                self.in_flight += 1
                self.peak = max(self.peak, self.in_flight)
            try:
                yield
            finally:
                with self._lock:
                    self.in_flight -= 1


class _Transient(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


class HTTPBackend(Backend):
    provider = "http"
    default_base_url = ""

    def __init__(
        self,
        model_id: str,
        *,
        base_url: str | None = None,
        api_key: str | None = None,
        api_key_env: str | None = None,
        embed_model: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        super().__init__(model_id)
        if api_key is None and api_key_env:
            api_key = os.environ.get(api_key_env)
        if not api_key:
            raise AuthError(
                f"{self.provider}: no API key (set the environment variable {api_key_env or '<unset>'})"
            )
        self.api_key = api_key
        self.base_url = (base_url or self.default_base_url).rstrip("/")
        self.embed_model = embed_model
        self.max_retries = max_retries
        self.backoff = backoff
        self.limiter = RateLimiter(max_in_flight)
        self.client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def _headers(self) -> dict[str, str]:
        raise NotImplementedError

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        attempt = 0
        while True:
            try:
                with self.limiter.slot():
                    return self._post_once(url, payload)
            except _Transient as exc:
                if attempt >= self.max_retries:
                    if exc.kind == "rate":
                        raise RateLimited(str(exc)) from None
                    raise BackendUnavailable(str(exc)) from None
                delay = self.backoff * (2 ** attempt)
                log.warning("%s: %s; retry %d in %.1fs", self.provider, exc, attempt + 1, delay)
                self._sleep(delay)
                attempt += 1

    def _post_once(self, url: str, payload: dict) -> dict:
        try:
            resp = self.client.post(url, json=payload, headers=self._headers())
        except httpx.TransportError as exc:
            raise _Transient("network", f"{type(exc).__name__}: {exc}") from None
        if resp.status_code in (401, 403):
            raise AuthError(f"{self.provider}: HTTP {resp.status_code} (check credentials)")
        if resp.status_code == 429:
            raise _Transient("rate", f"{self.provider}: HTTP 429 rate limited")
        if resp.status_code >= 500:
            raise _Transient("server", f"{self.provider}: HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise BackendUnavailable(f"{self.provider}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError:
            raise MalformedResponse(f"{self.provider}: response is not JSON") from None


class OpenAIBackend(HTTPBackend):
    """``/chat/completions`` and ``/embeddings`` in the OpenAI wire format."""

    provider = "openai"
    default_base_url = "https://api.openai.com/v1"

    def _headers(self):
        return {"Authorization": f"Bearer {self.api_key}"}

    def _complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_id or self.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        data = self._post("/chat/completions", payload)
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
            reason = choice.get("finish_reason") or "stop"
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("openai: missing choices[0].message.content") from None
        finish = {"stop": "stop", "length": "length"}.get(reason, "stop")
        return ChatResponse(text, finish, _usage(data.get("usage")))

    def _embed(self, text: str) -> EmbeddingVector:
        model = self.embed_model or self.model_id
        data = self._post("/embeddings", {"model": model, "input": text})
        try:
            values = data["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError):
            raise MalformedResponse("openai: missing data[0].embedding") from None
        return EmbeddingVector(values, model)


class AnthropicBackend(HTTPBackend):
    """``/v1/messages`` in the Anthropic wire format (chat only)."""

    provider = "anthropic"
    default_base_url = "https://api.anthropic.com"
    api_version = "2023-06-01"

    def _headers(self):
        return {"x-api-key": self.api_key, "anthropic-version": self.api_version}

    def _complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_id or self.model_id,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages if m.role != "system"
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.system:
            payload["system"] = request.system
        data = self._post("/v1/messages", payload)
        try:
            blocks = data["content"]
            text = "".join(b.get("text", "") for b in blocks if b.get("type") == "text")
        except (KeyError, TypeError, AttributeError):
            raise MalformedResponse("anthropic: missing content blocks") from None
        finish = "length" if data.get("stop_reason") == "max_tokens" else "stop"
        return ChatResponse(text, finish, _usage(data.get("usage")))


def _usage(raw) -> dict[str, int]:
    if not isinstance(raw, dict):
        return {}
    return {k: int(v) for k, v in raw.items() if isinstance(v, int)}
