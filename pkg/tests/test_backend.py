import json
import threading
import time

import httpx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from sarcasmcue.backend import (
    AuthError,
    BackendUnavailable,
    CachedBackend,
    ChatRequest,
    ChatResponse,
    DimensionMismatch,
    DiskCache,
    EmbeddingVector,
    FixtureBackend,
    MalformedResponse,
    Message,
    RateLimited,
    ScriptedBackend,
    embed_key,
    parse_label,
)
from sarcasmcue.core import Label
from sarcasmcue.http_backends import AnthropicBackend, OpenAIBackend, RateLimiter

S, N = Label.SARCASTIC, Label.NOT_SARCASTIC

# Realistic model outputs with hand-assigned gold labels.
LABEL_CORPUS = [
    ("Sarcastic", S),
    ("  no\n", N),
    ("The sentence is probably 'Sarcastic'.", S),
    ("Not Sarcastic", N),
    ("NOT SARCASTIC.", N),
    ("Label: Sarcastic", S),
    ("Answer: yes", S),
    ("answer: no.", N),
    ("The sentence is not sarcastic; the speaker is sincere.", N),
    ("Yes, this is sarcastic.", S),
    ("No. The speaker seems genuinely happy.", N),
    ("**Sarcastic**", S),
    ("Not-sarcastic", N),
    ("I would classify this as sarcastic because the praise contradicts the situation.", S),
    ("This isn’t sarcastic.", N),
    ("Sarcastic\n\nExplanation: the positive words clash with the negative event.", S),
    ("Non-sarcastic", N),
    ("Final answer: Not Sarcastic", N),
    ("Yes", S),
    ("The tone here is sarcastic, not sincere.", S),
]


@pytest.mark.parametrize("raw,gold", LABEL_CORPUS)
def test_parse_label_corpus(raw, gold):
    assert parse_label(raw) is gold


@pytest.mark.parametrize("raw", [None, "", "maybe", "I cannot determine this.", "I don't know", "Nothing to add"])
def test_parse_label_unparseable(raw):
    assert parse_label(raw) is None


def test_label_words_beat_yes_no():
    assert parse_label("No, it is sarcastic.") is S
    assert parse_label("Yes. Not sarcastic.") is N


@given(st.lists(st.sampled_from(["nOt", "NOT", "not"]), min_size=1, max_size=1),
       st.text(alphabet=" \t\n", min_size=1, max_size=4), st.sampled_from(["sarcastic", "SARCASTIC", "Sarcastic"]))
def test_not_sarcastic_any_casing(nots, ws, word):
    assert parse_label(f"{nots[0]}{ws}{word}") is N


def test_request_invariants():
    with pytest.raises(ValueError):
        ChatRequest((Message("system", "s"),))
    with pytest.raises(ValueError):
        ChatRequest.from_prompt("hi", temperature=-0.1)
    with pytest.raises(ValueError):
        Message("tool", "x")
    r = ChatRequest.from_prompt("hi")
    assert r.temperature == 0 and r.max_tokens == 512
    assert r.system == "You are an expert in sarcasm detection."


def test_cache_key_identity():
    a = ChatRequest.from_prompt("hello", model_id="m")
    b = ChatRequest.from_prompt("hello", model_id="m")
    assert a.cache_key() == b.cache_key()
    assert a.cache_key() != ChatRequest.from_prompt("hello", model_id="m2").cache_key()
    assert a.cache_key() != ChatRequest.from_prompt("hello", model_id="m", max_tokens=5).cache_key()
    assert a.followup("x", "y").last_user == "y"


def test_response_invariants():
    with pytest.raises(ValueError):
        ChatResponse(None, "stop")
    with pytest.raises(ValueError):
        ChatResponse("x", "done")
    assert ChatResponse(None, "error").text is None


def test_embedding_vector():
    v = EmbeddingVector([1, 2, 3], "m")
    assert v.dim == 3
    with pytest.raises(ValueError):
        v.values[0] = 5.0
    with pytest.raises(ValueError):
        EmbeddingVector([1.0, float("nan")])
    with pytest.raises(DimensionMismatch):
        EmbeddingVector([])


def test_fixture_lookup_and_miss():
    fx = FixtureBackend(model_id="m")
    req = fx.new_request("Is it sarcastic?")
    fx.register_response(req, "Sarcastic")
    assert fx.complete(req).text == "Sarcastic"
    with pytest.raises(BackendUnavailable):
        fx.complete(fx.new_request("unknown"))


def test_fixture_embedding():
    fx = FixtureBackend(model_id="m")
    vec = np.arange(8) / 8
    fx.register_embedding("hello", vec)
    a, b = fx.embed("hello"), fx.embed("hello")
    assert np.array_equal(a.values, vec)
    assert a.values.tobytes() == b.values.tobytes()
    with pytest.raises(DimensionMismatch):
        fx.register_embedding("b", np.zeros(16))
    with pytest.raises(BackendUnavailable):
        fx.embed("other")
    with pytest.raises(ValueError):
        fx.embed("")


def test_fixture_mixed_dims_rejected_on_load():
    recs = {
        embed_key("m", "a"): {"digest": embed_key("m", "a"), "kind": "embed", "model_id": "m", "values": [0.0] * 8},
        embed_key("m", "b"): {"digest": embed_key("m", "b"), "kind": "embed", "model_id": "m", "values": [0.0] * 16},
    }
    with pytest.raises(DimensionMismatch):
        FixtureBackend(recs)


def test_cache_single_upstream_call():
    inner = ScriptedBackend(lambda r: "Sarcastic", lambda t: [1.0, 2.0])
    cb = CachedBackend(inner)
    req = cb.new_request("q")
    assert cb.complete(req).text == cb.complete(req).text == "Sarcastic"
    assert inner.upstream_calls == 1
    cb.embed("t"), cb.embed("t")
    assert inner.embed_calls == 1


def test_cache_dimension_check():
    dims = iter([2, 3])
    cb = CachedBackend(ScriptedBackend(embedder=lambda t: [0.0] * next(dims)))
    cb.embed("a")
    with pytest.raises(DimensionMismatch):
        cb.embed("b")


def test_disk_cache_persists_and_serves_as_fixture(tmp_path):
    inner = ScriptedBackend(lambda r: "Not Sarcastic", lambda t: [0.5, 0.25], model_id="m")
    cb = CachedBackend(inner, DiskCache(tmp_path))
    req = cb.new_request("q")
    cb.complete(req)
    cb.embed("t")
    cb.complete(req)
    lines = (tmp_path / "records.jsonl").read_text().splitlines()
    assert len(lines) == 2  # append-only, no duplicates

    again = CachedBackend(ScriptedBackend(model_id="m"), DiskCache(tmp_path))
    assert again.complete(req).text == "Not Sarcastic"
    assert again.upstream_calls == 0

    fx = FixtureBackend(tmp_path)
    assert fx.model_id == "m"
    assert fx.complete(req).text == "Not Sarcastic"
    assert list(fx.embed("t").values) == [0.5, 0.25]


def test_errors_are_not_cached():
    calls = []

    def responder(req):
        calls.append(1)
        if len(calls) == 1:
            raise BackendUnavailable("down")
        return "Sarcastic"

    cb = CachedBackend(ScriptedBackend(responder))
    req = cb.new_request("q")
    with pytest.raises(BackendUnavailable):
        cb.complete(req)
    assert cb.complete(req).text == "Sarcastic"


def test_bad_fixture_record(tmp_path):
    (tmp_path / "x.jsonl").write_text("{not json}\n")
    with pytest.raises(MalformedResponse):
        FixtureBackend(tmp_path)


# -- HTTP ---------------------------------------------------------------------------


def openai_ok(request):
    if request.url.path.endswith("/embeddings"):
        return httpx.Response(200, json={"data": [{"embedding": [0.1, 0.2, 0.3]}]})
    return httpx.Response(200, json={"choices": [{"message": {"content": "Sarcastic"}, "finish_reason": "stop"}],
                                     "usage": {"prompt_tokens": 5, "completion_tokens": 1}})


def make_openai(handler, **kw):
    kw.setdefault("sleep", lambda s: None)
    return OpenAIBackend("gpt-x", api_key="k", client=httpx.Client(transport=httpx.MockTransport(handler)), **kw)


def test_openai_wire_format():
    seen = []

    def handler(request):
        seen.append(request)
        return openai_ok(request)

    b = make_openai(handler, base_url="http://local/v1")
    resp = b.complete(b.new_request("hi"))
    assert resp.text == "Sarcastic" and resp.usage["prompt_tokens"] == 5
    body = seen[0].read().decode()
    assert seen[0].url == "http://local/v1/chat/completions"
    assert seen[0].headers["authorization"] == "Bearer k"
    assert '"temperature": 0.0' in body or '"temperature":0.0' in body
    assert b.embed("x").dim == 3


def test_anthropic_wire_format():
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json={"content": [{"type": "text", "text": "Not Sarcastic"}],
                                         "stop_reason": "max_tokens"})

    b = AnthropicBackend("claude-x", api_key="k", client=httpx.Client(transport=httpx.MockTransport(handler)))
    resp = b.complete(b.new_request("hi", system="sys"))
    assert resp.text == "Not Sarcastic" and resp.finish_reason == "length"
    payload = json.loads(seen[0].read())
    assert payload["system"] == "sys"
    assert all(m["role"] != "system" for m in payload["messages"])
    assert seen[0].headers["x-api-key"] == "k"
    assert seen[0].headers["anthropic-version"] == "2023-06-01"
    with pytest.raises(BackendUnavailable):
        b.embed("x")


def test_retry_with_exponential_backoff():
    statuses = iter([503, 429, 200])
    delays = []

    def handler(request):
        code = next(statuses)
        return openai_ok(request) if code == 200 else httpx.Response(code)

    b = make_openai(handler, backoff=0.5, sleep=delays.append)
    assert b.complete(b.new_request("hi")).text == "Sarcastic"
    assert delays == [0.5, 1.0]


@pytest.mark.parametrize("code,exc", [(429, RateLimited), (500, BackendUnavailable), (401, AuthError),
                                      (403, AuthError), (404, BackendUnavailable)])
def test_http_errors(code, exc):
    b = make_openai(lambda r: httpx.Response(code), max_retries=2)
    with pytest.raises(exc):
        b.complete(b.new_request("hi"))


def test_network_error_then_unavailable():
    def handler(request):
        raise httpx.ConnectError("refused")

    b = make_openai(handler, max_retries=1)
    with pytest.raises(BackendUnavailable):
        b.complete(b.new_request("hi"))


def test_malformed_responses():
    b = make_openai(lambda r: httpx.Response(200, text="<html>"))
    with pytest.raises(MalformedResponse):
        b.complete(b.new_request("hi"))
    b = make_openai(lambda r: httpx.Response(200, json={"choices": []}))
    with pytest.raises(MalformedResponse):
        b.complete(b.new_request("hi"))


def test_missing_credentials(monkeypatch):
    monkeypatch.delenv("SC_TEST_KEY", raising=False)
    with pytest.raises(AuthError, match="SC_TEST_KEY"):
        OpenAIBackend("m", api_key_env="SC_TEST_KEY")
    monkeypatch.setenv("SC_TEST_KEY", "secret")
    assert OpenAIBackend("m", api_key_env="SC_TEST_KEY").api_key == "secret"


def test_rate_limiter_bounds_in_flight():
    limiter = RateLimiter(3)
    lock = threading.Lock()
    state = {"now": 0, "max": 0}

    def work():
        with limiter.slot():
            with lock:
                state["now"] += 1
                state["max"] = max(state["max"], state["now"])
            time.sleep(0.01)
            with lock:
                state["now"] -= 1

    threads = [threading.Thread(target=work) for _ in range(20)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert state["max"] <= 3 and limiter.peak <= 3
    assert limiter.in_flight == 0
    with pytest.raises(ValueError):
        RateLimiter(0)


def test_http_backend_respects_limiter():
    active, peak, lock = [0], [0], threading.Lock()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.005)
        with lock:
            active[0] -= 1
        return openai_ok(request)

    b = make_openai(handler, max_in_flight=2)
    threads = [threading.Thread(target=lambda i=i: b.complete(b.new_request(f"q{i}"))) for i in range(12)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2
