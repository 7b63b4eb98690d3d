import json
import os
import random

import httpx
import numpy as np
import pytest

from chronos.providers import ConfigurationError, MockScripts, ProviderFailure, build_providers
from chronos.providers.base import ChatReply, ToolCallRequest, with_retry
from chronos.providers.config import role_settings
from chronos.providers.mock import (
    HashEmbedder,
    KeywordGuidanceChat,
    LexicalReranker,
    ScriptedChat,
    message_key,
    overlap_score,
    question_slots,
)
from chronos.providers.remote import CohereReranker, OpenAIChat, OpenAIEmbedder, TokenBucket

TOOL = {"name": "search_events", "description": "d", "parameters": {"type": "object", "properties": {}}}


def test_hash_embedder_contract():
    emb = HashEmbedder(48, seed=3)
    a, b, c = emb.embed(["a", "a", "something else"])
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(c) - 1.0) < 1e-6
    assert emb.embed([]) == []
    assert all(v.shape == (48,) for v in emb.embed(["x", "y z"]))
    assert not np.array_equal(HashEmbedder(48, seed=4).embed(["a"])[0], a)


def test_lexical_reranker_contract():
    rr = LexicalReranker()
    assert rr.rerank("q", []) == []
    q = "where did I buy my running shoes"
    rng = random.Random(0)
    docs = [" ".join(rng.choice(q.split() + ["lake", "bread", "car"]) for _ in range(6)) for _ in range(50)]
    docs[17] = q
    out = rr.rerank(q, docs)
    assert sorted(i for i, _ in out) == list(range(50))
    assert out[0][0] == 17
    assert [s for _, s in out] == sorted((s for _, s in out), reverse=True)


def test_overlap_score_closed_form():
    assert overlap_score("red fox jumps", "red fox") == pytest.approx(2 / (3 * 2) ** 0.5)
    assert overlap_score("a", "") == 0.0


def test_scripted_chat_replay_and_tool_stripping():
    reply = {"content": "look", "tool_calls": [{"name": "search_events", "arguments": {"k": 3}},
                                               {"name": "grep_turns", "arguments": {"pattern": "x"}}]}
    chat = ScriptedChat({"hello": [reply, "final"]})
    msgs = [{"role": "user", "content": "hello"}]
    first = chat.complete(msgs, [TOOL])
    assert [c.name for c in first.tool_calls] == ["search_events"]
    assert ChatReply.from_dict(json.loads(json.dumps(first.to_dict()))) == first
    second = chat.complete(msgs + [first.as_message(), {"role": "tool", "content": "obs"}], [TOOL])
    assert second.content == "final"
    assert chat.complete([{"role": "user", "content": "unknown"}]).content == "I don't know."
    strict = ScriptedChat({}, default=None)
    with pytest.raises(ProviderFailure):
        strict.complete([{"role": "user", "content": "x"}])
    assert message_key("hello") in ScriptedChat({message_key("hello"): ["hi"]}).script


def test_keyword_guidance_slots():
    slots = question_slots("How many times did I exercise in May?")
    assert slots["entity"] == "exercise"
    assert "count" in slots["operations"]
    assert slots["time"] == "in May"
    out = KeywordGuidanceChat().complete([{"role": "user", "content": "Question: How many times did I exercise in May?"}])
    bullets = [b for b in out.content.splitlines() if b.startswith("- ")]
    assert 1 <= len(bullets) <= 5
    text = out.content.lower()
    assert "exercise" in text and "count" in text and "in may" in text


def test_with_retry_backoff_and_non_retryable():
    sleeps, calls = [], []

    def flaky():
        calls.append(1)
        if len(calls) < 3:
            raise ProviderFailure("429")
        return "ok"

    assert with_retry(flaky, sleep=sleeps.append) == "ok"
    assert sleeps == [1.0, 2.0]

    def auth():
        calls.append(1)
        raise ProviderFailure("401", retryable=False)

    calls.clear()
    with pytest.raises(ProviderFailure):
        with_retry(auth, sleep=sleeps.append)
    assert len(calls) == 1


def test_token_bucket_waits_when_empty():
    now = [0.0]
    waited = []

    def sleep(s):
        waited.append(s)
        now[0] += s

    bucket = TokenBucket(2.0, capacity=2, clock=lambda: now[0], sleep=sleep)
    for _ in range(4):
        bucket.acquire()
    assert sum(waited) == pytest.approx(1.0)


def test_remote_requires_credentials_at_startup():
    with pytest.raises(ConfigurationError):
        build_providers("remote", env={})
    with pytest.raises(ConfigurationError):
        build_providers("remote", env={"OPENAI_API_KEY": "k"})
    ps = build_providers("remote", env={"OPENAI_API_KEY": "k", "COHERE_API_KEY": "c"})
    assert ps.mode == "remote"


def test_guidance_defaults_to_cheapest_chat_role():
    roles = role_settings({"roles": {"agent": {"model": "big", "cost": 10}, "judge": {"model": "mid", "cost": 5},
                                     "extractor": {"model": "small", "cost": 1}}})
    assert roles["guidance"]["model"] == "small"
    assert role_settings({"roles": {"guidance": {"model": "g"}}})["guidance"]["model"] == "g"


def test_mock_provider_set():
    ps = build_providers("mock", scripts=MockScripts(agent={"q": ["a"]}))
    assert ps.judge is None and ps.mode == "mock"
    assert ps.agent.complete([{"role": "user", "content": "q"}]).content == "a"


# ---------------------------------------------------------------------------
# remote clients against a fake HTTP server
# ---------------------------------------------------------------------------


def _client(handler):
    return httpx.Client(transport=httpx.MockTransport(handler))


def test_openai_chat_pins_temperature_and_parses_tool_calls():
    seen = {}

    def handler(request):
        body = json.loads(request.content)
        seen.update(body)
        return httpx.Response(200, json={"choices": [{"message": {"content": None, "tool_calls": [
            {"id": "c1", "type": "function",
             "function": {"name": "search_events", "arguments": '{"query": "gym", "k": 5}'}}]}}]})

    chat = OpenAIChat("m", "key", "https://x/v1", client=_client(handler))
    reply = chat.complete([{"role": "user", "content": "hi"}], [TOOL])
    assert seen["temperature"] == 0
    assert seen["tools"][0]["function"]["name"] == "search_events"
    assert reply.tool_calls == (ToolCallRequest("search_events", {"query": "gym", "k": 5}, "c1"),)
    assert ChatReply.from_dict(reply.to_dict()) == reply


@pytest.mark.parametrize("status, retryable", [(401, False), (403, False), (429, True), (503, True), (400, False)])
def test_http_errors_map_to_provider_failure(status, retryable):
    chat = OpenAIChat("m", "k", "https://x/v1", client=_client(lambda r: httpx.Response(status, text="err")))
    with pytest.raises(ProviderFailure) as info:
        chat.complete([{"role": "user", "content": "hi"}])
    assert info.value.retryable is retryable


def test_openai_embedder_orders_rows_and_checks_dimension():
    def handler(request):
        n = len(json.loads(request.content)["input"])
        return httpx.Response(200, json={"data": [
            {"index": i, "embedding": [float(i)] * 4} for i in reversed(range(n))]})

    emb = OpenAIEmbedder("e", "k", "https://x/v1", dimension=4, batch_size=2, client=_client(handler))
    out = emb.embed(["a", "b", "c"])
    assert [v[0] for v in out] == [0.0, 1.0, 0.0]
    bad = OpenAIEmbedder("e", "k", "https://x/v1", dimension=8, client=_client(handler))
    with pytest.raises(ProviderFailure):
        bad.embed(["a"])


def test_cohere_reranker_returns_permutation():
    def handler(request):
        body = json.loads(request.content)
        assert body["top_n"] == len(body["documents"])
        return httpx.Response(200, json={"results": [
            {"index": 1, "relevance_score": 0.9}, {"index": 0, "relevance_score": 0.2}]})

    rr = CohereReranker("r", "k", client=_client(handler))
    assert rr.rerank("q", ["a", "b"]) == [(1, 0.9), (0, 0.2)]

    def partial(request):
        return httpx.Response(200, json={"results": [{"index": 1, "relevance_score": 0.9}]})

    with pytest.raises(ProviderFailure):
        CohereReranker("r", "k", client=_client(partial)).rerank("q", ["a", "b"])


# ---------------------------------------------------------------------------
# live contract suite, only with credentials
# ---------------------------------------------------------------------------

remote = pytest.mark.skipif(
    os.environ.get("CHRONOS_REMOTE_TESTS") != "1", reason="set CHRONOS_REMOTE_TESTS=1 with API keys to run"
)


@pytest.mark.remote
@remote
def test_live_contract():
    ps = build_providers("remote")
    a, b = ps.embedder.embed(["same text", "same text"])
    assert abs(np.linalg.norm(a) - 1.0) < 1e-3 and np.allclose(a, b, atol=1e-3)
    ranked = ps.reranker.rerank("red fox", ["blue whale", "red fox"])
    assert sorted(i for i, _ in ranked) == [0, 1] and ranked[0][0] == 1
    assert ps.agent.complete([{"role": "user", "content": "Reply with the word ok."}]).content
