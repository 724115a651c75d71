"""Backend-agnostic chat completion and embedding interface.

Every strategy talks to a :class:`Backend`. Concrete backends:

* :class:`FixtureBackend` replays recorded ``digest -> response`` records and
  is what the offline tests run against.
* :class:`ScriptedBackend` answers through a Python callable (test scripting).
* :class:`CachedBackend` wraps any backend with an append-only on-disk store.
  A cache directory written this way is itself a valid fixture directory.
* HTTP backends live in :mod:`sarcasmcue.http_backends`, the deterministic
  stand-in model in :mod:`sarcasmcue.simulated`.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import Label

DEFAULT_SYSTEM_PROMPT = "You are an expert in sarcasm detection."
DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 512
ROLES = ("system", "user", "assistant")


class BackendError(RuntimeError):
    pass


class AuthError(BackendError):
    pass


class RateLimited(BackendError):
    pass


class BackendUnavailable(BackendError):
    pass


class MalformedResponse(BackendError):
    pass


class DimensionMismatch(BackendError, ValueError):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    model_id: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("a chat request needs at least one user message")
        if not self.temperature >= 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @classmethod
    def from_prompt(cls, prompt: str, system: str | None = DEFAULT_SYSTEM_PROMPT, **kwargs) -> "ChatRequest":
        messages = []
        if system:
            messages.append(Message("system", system))
        messages.append(Message("user", prompt))
        return cls(tuple(messages), **kwargs)

    def followup(self, assistant_text: str, user_text: str) -> "ChatRequest":
        """Same request extended by one assistant turn and one user turn."""
        extra = (Message("assistant", assistant_text), Message("user", user_text))
        return ChatRequest(self.messages + extra, self.model_id, self.temperature, self.max_tokens)

    @property
    def last_user(self) -> str:
        return next(m.content for m in reversed(self.messages) if m.role == "user")

    @property
    def system(self) -> str | None:
        return next((m.content for m in self.messages if m.role == "system"), None)

    def cache_key(self) -> str:
        payload = {
            "kind": "chat",
            "model_id": self.model_id,
            "messages": [[m.role, m.content] for m in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        return _digest(payload)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: str = "stop"
    usage: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.finish_reason not in ("stop", "length", "error"):
            raise ValueError(f"unknown finish_reason {self.finish_reason!r}")
        if self.finish_reason == "stop" and self.text is None:
            raise ValueError("text must be non-null when finish_reason is 'stop'")


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray
    source_model: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatch(f"embedding must be a non-empty vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def __eq__(self, other):
        return (
            isinstance(other, EmbeddingVector)
            and self.source_model == other.source_model
            and np.array_equal(self.values, other.values)
        )


def _digest(payload) -> str:
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def embed_key(model_id: str, text: str) -> str:
    return _digest({"kind": "embed", "model_id": model_id, "text": text})


# -- label parsing -----------------------------------------------------------

# Longest match first: "not sarcastic" must win over the "sarcastic" inside it.
_LABEL_PATTERN = re.compile(
    r"\b(?:not|non|isn't|isnt|wasn't|is not)[\s_-]*sarcastic\b|\bnonsarcastic\b|\bsarcastic\b"
)
_YES_NO_PATTERN = re.compile(r"\b(yes|no)\b")


def parse_label(raw: str | None) -> Label | None:
    """Map a free-text answer to a label; ``None`` when unparseable.

    Explicit label words take precedence over yes/no answers. Within each
    tier the earliest match in the text wins.
    """
    if raw is None:
        return None
    text = " ".join(raw.lower().replace("’", "'").split())
    if not text:
        return None
    m = _LABEL_PATTERN.search(text)
    if m:
        return Label.SARCASTIC if m.group(0) == "sarcastic" else Label.NOT_SARCASTIC
    m = _YES_NO_PATTERN.search(text)
    if m:
        return Label.SARCASTIC if m.group(1) == "yes" else Label.NOT_SARCASTIC
    return None


# -- backends ------------------------------------------------------------------


class Backend:
    """Base class. Subclasses implement ``_complete`` and ``_embed``."""

    model_id: str = "backend"

    def __init__(self, model_id: str | None = None):
        if model_id is not None:
            self.model_id = model_id
        self._upstream = 0
        self._embeds = 0
        self._embed_dim: int | None = None
        self._count_lock = threading.Lock()

    @property
    def upstream_calls(self) -> int:
        """Requests that reached the provider (cache hits excluded)."""
        return self._upstream

    @property
    def embed_calls(self) -> int:
        return self._embeds

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._count_lock:
            self._upstream += 1
        return self._complete(request)

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        with self._count_lock:
            self._embeds += 1
        vec = self._embed(text)
        self._check_dim(vec)
        return vec

    def _check_dim(self, vec: EmbeddingVector) -> None:
        if self._embed_dim is None:
            self._embed_dim = vec.dim
        elif vec.dim != self._embed_dim:
            raise DimensionMismatch(
                f"{self.model_id}: expected {self._embed_dim}-dim embedding, got {vec.dim}"
            )

    def _complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def _embed(self, text: str) -> EmbeddingVector:
        raise BackendUnavailable(f"{type(self).__name__} has no embedding endpoint")

    def new_request(self, prompt: str, system: str | None = DEFAULT_SYSTEM_PROMPT, **kwargs) -> ChatRequest:
        kwargs.setdefault("model_id", self.model_id)
        return ChatRequest.from_prompt(prompt, system=system, **kwargs)


def load_records(directory: str | Path) -> dict[str, dict]:
    """Read every ``*.jsonl`` record file in *directory* into ``{digest: record}``."""
    records: dict[str, dict] = {}
    directory = Path(directory)
    if not directory.exists():
        return records
    for path in sorted(directory.glob("*.jsonl")):
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    records[rec["digest"]] = rec
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise MalformedResponse(f"{path}:{lineno}: bad record ({exc})") from None
    return records


class DiskCache:
    """Append-only record store; one JSON object per line.

    Readers see a dict snapshot; writes are serialized through a lock.
    """

    filename = "records.jsonl"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / self.filename
        self._records = load_records(self.directory)
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._records)

    def __contains__(self, key):
        return key in self._records

    def get(self, key: str) -> dict | None:
        return self._records.get(key)

    def put(self, key: str, record: dict) -> None:
        record = {"digest": key, **record}
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            if key in self._records:
                return
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self._records[key] = record


class CachedBackend(Backend):
    """Serves repeated requests from a cache; only misses reach *inner*."""

    def __init__(self, inner: Backend, cache: DiskCache | None = None):
        super().__init__(inner.model_id)
        self.inner = inner
        self.cache = cache
        self._memory: dict[str, dict] = {}
        self._lock = threading.Lock()

    @property
    def upstream_calls(self):
        return self.inner.upstream_calls

    @property
    def embed_calls(self):
        return self.inner.embed_calls

    def _lookup(self, key):
        rec = self._memory.get(key)
        if rec is None and self.cache is not None:
            rec = self.cache.get(key)
        return rec

    def _store(self, key, record):
        with self._lock:
            self._memory[key] = record
        if self.cache is not None:
            self.cache.put(key, record)

    def complete(self, request: ChatRequest) -> ChatResponse:
        key = request.cache_key()
        rec = self._lookup(key)
        if rec is not None:
            return ChatResponse(rec["text"], rec.get("finish_reason", "stop"), rec.get("usage", {}))
        resp = self.inner.complete(request)
        if resp.finish_reason != "error":
            self._store(key, {
                "kind": "chat",
                "model_id": request.model_id,
                "text": resp.text,
                "finish_reason": resp.finish_reason,
                "usage": dict(resp.usage),
            })
        return resp

    def embed(self, text: str) -> EmbeddingVector:
        key = embed_key(self.model_id, text)
        rec = self._lookup(key)
        if rec is not None:
            vec = EmbeddingVector(rec["values"], rec.get("model_id", self.model_id))
        else:
            vec = self.inner.embed(text)
            self._store(key, {"kind": "embed", "model_id": self.model_id, "values": vec.values.tolist()})
        self._check_dim(vec)
        return vec


class FixtureBackend(Backend):
    """Answers from recorded ``digest -> response`` records; misses raise."""

    def __init__(self, records: str | Path | Mapping[str, dict] | None = None, model_id: str | None = None):
        if records is None:
            recs: dict[str, dict] = {}
        elif isinstance(records, Mapping):
            recs = dict(records)
        else:
            recs = load_records(records)
        if model_id is None:
            models = sorted({r.get("model_id", "") for r in recs.values()})
            model_id = models[0] if len(models) == 1 else "fixture"
        super().__init__(model_id)
        self.records = recs
        dims = {len(r["values"]) for r in recs.values() if r.get("kind") == "embed"}
        if len(dims) > 1:
            raise DimensionMismatch(f"fixture embeddings have mixed dimensions {sorted(dims)}")
        self._embed_dim = dims.pop() if dims else None

    def register_response(self, request: ChatRequest, text: str, finish_reason: str = "stop") -> None:
        self.records[request.cache_key()] = {
            "digest": request.cache_key(), "kind": "chat", "model_id": request.model_id,
            "text": text, "finish_reason": finish_reason, "usage": {},
        }

    def register_embedding(self, text: str, values: Sequence[float]) -> None:
        values = [float(v) for v in values]
        if self._embed_dim is not None and len(values) != self._embed_dim:
            raise DimensionMismatch(f"expected {self._embed_dim}-dim embedding, got {len(values)}")
        self._embed_dim = len(values)
        key = embed_key(self.model_id, text)
        self.records[key] = {"digest": key, "kind": "embed", "model_id": self.model_id, "values": values}

    def _complete(self, request: ChatRequest) -> ChatResponse:
        rec = self.records.get(request.cache_key())
        if rec is None or rec.get("kind", "chat") != "chat":
            raise BackendUnavailable(f"no fixture for request digest {request.cache_key()[:12]}")
        return ChatResponse(rec["text"], rec.get("finish_reason", "stop"), rec.get("usage", {}))

    def _embed(self, text: str) -> EmbeddingVector:
        rec = self.records.get(embed_key(self.model_id, text))
        if rec is None:
            raise BackendUnavailable(f"no fixture embedding for text {text[:40]!r}")
        return EmbeddingVector(rec["values"], self.model_id)


class ScriptedBackend(Backend):
    """Backend driven by Python callables; keeps every request it receives.

    *responder* maps a request to reply text. *embedder* is a callable or
    a ``{text: vector}`` mapping.
    """

    def __init__(
        self,
        responder: Callable[[ChatRequest], str] | None = None,
        embedder: Callable[[str], Sequence[float]] | Mapping[str, Sequence[float]] | None = None,
        model_id: str = "scripted",
    ):
        super().__init__(model_id)
        self.responder = responder
        self.embedder = embedder
        self.requests: list[ChatRequest] = []
        self.embedded: list[str] = []

    def _complete(self, request):
        self.requests.append(request)
        if self.responder is None:
            raise BackendUnavailable("no responder configured")
        return ChatResponse(self.responder(request))

    def _embed(self, text):
        self.embedded.append(text)
        if self.embedder is None:
            raise BackendUnavailable("no embedder configured")
        if isinstance(self.embedder, Mapping):
            if text not in self.embedder:
                raise BackendUnavailable(f"no embedding for {text[:40]!r}")
            values = self.embedder[text]
        else:
            values = self.embedder(text)
        return EmbeddingVector(values, self.model_id)
