"""Provider interfaces shared by the remote and mock backends."""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Protocol, Sequence, TypeVar, runtime_checkable

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

Message = dict[str, Any]

DEFAULT_ATTEMPTS = 3
DEFAULT_BACKOFF = 1.0

_TOKEN = re.compile(r"[a-z0-9]+")


class ProviderFailure(RuntimeError):
    """A backend call failed; ``retryable`` says whether trying again may help."""

    def __init__(self, message: str, *, retryable: bool = True):
        super().__init__(message)
        self.retryable = retryable


class ConfigurationError(RuntimeError):
    """Provider configuration is missing or inconsistent."""


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class ToolCallRequest:
    name: str
    arguments: dict[str, Any] = field(default_factory=dict)
    id: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "name": self.name, "arguments": self.arguments}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ToolCallRequest:
        args = data.get("arguments") or {}
        if isinstance(args, str):
            args = json.loads(args) if args.strip() else {}
        return cls(data["name"], dict(args), data.get("id", ""))


@dataclass(frozen=True)
class ChatReply:
    content: str = ""
    tool_calls: tuple[ToolCallRequest, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {"content": self.content, "tool_calls": [c.to_dict() for c in self.tool_calls]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ChatReply:
        calls = tuple(ToolCallRequest.from_dict(c) for c in data.get("tool_calls") or ())
        return cls(data.get("content") or "", calls)

    def as_message(self) -> Message:
        msg: Message = {"role": "assistant", "content": self.content}
        if self.tool_calls:
            msg["tool_calls"] = [c.to_dict() for c in self.tool_calls]
        return msg


@runtime_checkable
class ChatProvider(Protocol):
    def complete(self, messages: Sequence[Message], tools: Sequence[Mapping[str, Any]] | None = None) -> ChatReply:
        ...


@runtime_checkable
class Embedder(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        ...


@runtime_checkable
class Reranker(Protocol):
    def rerank(self, question: str, docs: Sequence[str]) -> list[tuple[int, float]]:
        """Return ``(doc_index, score)`` for every doc, best first."""
        ...


@runtime_checkable
class Extractor(Protocol):
    def extract(self, request: Mapping[str, Any]) -> dict[str, Any]:
        ...


def with_retry(
    fn: Callable[[], T],
    *,
    attempts: int = DEFAULT_ATTEMPTS,
    base_delay: float = DEFAULT_BACKOFF,
    sleep: Callable[[float], None] = time.sleep,
    what: str = "provider call",
) -> T:
    """Call ``fn`` with exponential backoff on retryable :class:`ProviderFailure`."""
    for attempt in range(1, attempts + 1):
        try:
            return fn()
        except ProviderFailure as exc:
            if not exc.retryable or attempt == attempts:
                raise
            delay = base_delay * 2 ** (attempt - 1)
            logger.warning("%s failed (attempt %d/%d): %s; retrying in %.1fs", what, attempt, attempts, exc, delay)
            sleep(delay)
    raise AssertionError("unreachable")


def check_permutation(ranked: Sequence[tuple[int, float]], n: int) -> None:
    if sorted(i for i, _ in ranked) != list(range(n)):
        raise ProviderFailure("reranker returned a result that is not a permutation of its input", retryable=False)
