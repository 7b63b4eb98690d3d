"""HTTP-backed providers (OpenAI-compatible chat/embeddings, Cohere rerank).

All generation calls pin ``temperature`` to 0. Each client owns a token
bucket so concurrent callers share one rate limit.
"""

from __future__ import annotations

import json
import threading
import time
from typing import Any, Mapping, Sequence

import httpx
import numpy as np

from .base import ChatReply, Message, ProviderFailure, ToolCallRequest, check_permutation

DEFAULT_OPENAI_URL = "https://api.openai.com/v1"
DEFAULT_COHERE_URL = "https://api.cohere.com/v2"


class TokenBucket:
    """Blocking token bucket: ``rate`` tokens per second, bursts up to ``capacity``."""

    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self, tokens: float = 1.0) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= tokens:
                    self._tokens -= tokens
                    return
                wait = (tokens - self._tokens) / self.rate
            self._sleep(wait)


class _HttpProvider:
    def __init__(
        self,
        api_key: str,
        base_url: str,
        *,
        timeout: float = 60.0,
        requests_per_second: float = 5.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        self._bucket = TokenBucket(requests_per_second)

    def _post(self, path: str, payload: Mapping[str, Any]) -> dict[str, Any]:
        self._bucket.acquire()
        try:
            resp = self._client.post(f"{self.base_url}{path}", json=payload, headers=self._headers)
        except httpx.HTTPError as exc:
            raise ProviderFailure(f"network error calling {path}: {exc}", retryable=True) from exc
        if resp.status_code in (401, 403):
            raise ProviderFailure(f"authentication failed ({resp.status_code}) for {path}", retryable=False)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderFailure(f"{path} returned {resp.status_code}", retryable=True)
        if resp.status_code >= 400:
            raise ProviderFailure(f"{path} returned {resp.status_code}: {resp.text[:300]}", retryable=False)
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderFailure(f"{path} returned invalid JSON", retryable=True) from exc


def openai_tool_schema(tool: Mapping[str, Any]) -> dict[str, Any]:
    return {
        "type": "function",
        "function": {
            "name": tool["name"],
            "description": tool.get("description", ""),
            "parameters": tool.get("parameters", {"type": "object", "properties": {}}),
        },
    }


def _to_openai_message(msg: Message) -> dict[str, Any]:
    out: dict[str, Any] = {"role": msg["role"], "content": msg.get("content") or ""}
    if msg.get("tool_calls"):
        out["tool_calls"] = [
            {
                "id": c["id"],
                "type": "function",
                "function": {"name": c["name"], "arguments": json.dumps(c.get("arguments", {}), sort_keys=True)},
            }
            for c in msg["tool_calls"]
        ]
    if msg["role"] == "tool":
        out["tool_call_id"] = msg.get("tool_call_id", "")
    return out


class OpenAIChat(_HttpProvider):
    """Chat completions against any OpenAI-compatible endpoint."""

    def __init__(self, model: str, api_key: str, base_url: str = DEFAULT_OPENAI_URL, **kwargs: Any):
        super().__init__(api_key, base_url, **kwargs)
        self.model = model

    def complete(self, messages: Sequence[Message], tools: Sequence[Mapping[str, Any]] | None = None) -> ChatReply:
        payload: dict[str, Any] = {
            "model": self.model,
            "temperature": 0,
            "messages": [_to_openai_message(m) for m in messages],
        }
        if tools:
            payload["tools"] = [openai_tool_schema(t) for t in tools]
        data = self._post("/chat/completions", payload)
        try:
            message = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderFailure("chat response has no choices", retryable=True) from exc
        calls = []
        for raw in message.get("tool_calls") or ():
            fn = raw.get("function", {})
            try:
                args = json.loads(fn.get("arguments") or "{}")
            except json.JSONDecodeError:
                args = {"_raw": fn.get("arguments", "")}
            calls.append(ToolCallRequest(fn.get("name", ""), args, raw.get("id", "")))
        return ChatReply(message.get("content") or "", tuple(calls))


class OpenAIEmbedder(_HttpProvider):
    def __init__(
        self,
        model: str,
        api_key: str,
        base_url: str = DEFAULT_OPENAI_URL,
        dimension: int = 3072,
        batch_size: int = 256,
        **kwargs: Any,
    ):
        super().__init__(api_key, base_url, **kwargs)
        self.model = model
        self.dimension = dimension
        self.batch_size = batch_size

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for i in range(0, len(texts), self.batch_size):
            batch = list(texts[i:i + self.batch_size])
            data = self._post("/embeddings", {"model": self.model, "input": batch, "dimensions": self.dimension})
            rows = sorted(data.get("data", []), key=lambda r: r["index"])
            if len(rows) != len(batch):
                raise ProviderFailure("embedding response size mismatch", retryable=True)
            for row in rows:
                vec = np.asarray(row["embedding"], dtype=np.float64)
                if vec.shape != (self.dimension,):
                    raise ProviderFailure(f"expected {self.dimension}-d embedding, got {vec.shape}", retryable=False)
                out.append(vec)
        return out


class CohereReranker(_HttpProvider):
    def __init__(self, model: str, api_key: str, base_url: str = DEFAULT_COHERE_URL, **kwargs: Any):
        super().__init__(api_key, base_url, **kwargs)
        self.model = model

    def rerank(self, question: str, docs: Sequence[str]) -> list[tuple[int, float]]:
        if not docs:
            return []
        data = self._post(
            "/rerank",
            {"model": self.model, "query": question, "documents": list(docs), "top_n": len(docs)},
        )
        ranked = [(int(r["index"]), float(r["relevance_score"])) for r in data.get("results", [])]
        ranked.sort(key=lambda p: (-p[1], p[0]))
        check_permutation(ranked, len(docs))
        return ranked
