"""Deterministic offline providers.

Everything here is a pure function of its constructor arguments, so a whole
pipeline run under mocks reproduces byte for byte.
"""

from __future__ import annotations

import hashlib
import math
import re
from functools import lru_cache
from typing import Any, Mapping, Sequence

import numpy as np

from .base import ChatReply, Message, ProviderFailure, ToolCallRequest, tokenize

_STOPWORDS = frozenset(
    """a an the and or but of to in on at for with from by about as is are was were be been
    am do does did done have has had i me my mine you your we our it its this that these those
    what which who whom when where why how many much times time did any some there their they
    them he she his her can could would should will just so than then too very not no""".split()
)


def message_key(text: str) -> str:
    """Stable key for a chat message (first 16 hex chars of its SHA-256)."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# ---------------------------------------------------------------------------
# embeddings
# ---------------------------------------------------------------------------


class HashEmbedder:
    """Sum of seeded pseudo-random token vectors, normalized to unit length.

    Identical texts map to identical vectors and texts sharing words land
    close together, which keeps mock dense retrieval meaningful.
    """

    def __init__(self, dimension: int = 64, seed: int = 0):
        if dimension <= 0:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.seed = seed
        self._token_vector = lru_cache(maxsize=65536)(self._make_vector)

    def _make_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x1f{token}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self.dimension)

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            tokens = tokenize(text) or [f"\x00{text}"]
            vec = np.zeros(self.dimension)
            for tok in tokens:
                vec += self._token_vector(tok)
            norm = np.linalg.norm(vec)
            if norm == 0.0:
                vec = self._token_vector(f"\x00{text}")
                norm = np.linalg.norm(vec)
            out.append(vec / norm)
        return out


# ---------------------------------------------------------------------------
# reranking
# ---------------------------------------------------------------------------


def overlap_score(question: str, doc: str) -> float:
    """|Q ∩ D| / sqrt(|Q| |D|) over lowercase alphanumeric token sets."""
    q, d = set(tokenize(question)), set(tokenize(doc))
    if not q or not d:
        return 0.0
    return len(q & d) / math.sqrt(len(q) * len(d))


class LexicalReranker:
    """Token-overlap reranker; ties keep the input order."""

    def rerank(self, question: str, docs: Sequence[str]) -> list[tuple[int, float]]:
        scored = [(i, overlap_score(question, d)) for i, d in enumerate(docs)]
        scored.sort(key=lambda p: (-p[1], p[0]))
        return scored


# ---------------------------------------------------------------------------
# chat
# ---------------------------------------------------------------------------


def _last_user_index(messages: Sequence[Message]) -> int:
    for i in range(len(messages) - 1, -1, -1):
        if messages[i].get("role") == "user":
            return i
    raise ProviderFailure("no user message to key the script on", retryable=False)


class ScriptedChat:
    """Replays scripted replies keyed by the last user message.

    ``script`` maps either the literal user message or ``message_key(text)``
    to the ordered replies for that conversation; the n-th assistant turn
    after the user message gets the n-th reply. Replies naming tools that
    were not offered are stripped of those calls, as a real API would refuse
    them. Unscripted turns get ``default`` or raise a non-retryable failure.
    """

    def __init__(self, script: Mapping[str, Sequence[Mapping[str, Any] | str]] | None = None,
                 default: str | None = "I don't know."):
        self.script: dict[str, list[ChatReply]] = {}
        for key, replies in (script or {}).items():
            k = key if re.fullmatch(r"[0-9a-f]{16}", key) else message_key(key)
            self.script[k] = [ChatReply(content=r) if isinstance(r, str) else ChatReply.from_dict(r) for r in replies]
        self.default = default

    def complete(self, messages: Sequence[Message], tools: Sequence[Mapping[str, Any]] | None = None) -> ChatReply:
        idx = _last_user_index(messages)
        key = message_key(messages[idx].get("content") or "")
        step = sum(1 for m in messages[idx + 1:] if m.get("role") == "assistant")
        replies = self.script.get(key, [])
        if step >= len(replies):
            if self.default is None:
                raise ProviderFailure(f"no scripted reply for message {key} step {step}", retryable=False)
            return ChatReply(content=self.default)
        reply = replies[step]
        offered = {t["name"] for t in tools or ()}
        calls = tuple(
            ToolCallRequest(c.name, c.arguments, c.id or f"call_{step}_{i}")
            for i, c in enumerate(reply.tool_calls)
            if c.name in offered
        )
        return ChatReply(reply.content, calls)


_MONTH_NAMES = (
    "January February March April May June July August September October November December".split()
)
_OPERATIONS = (
    (r"how many|count|number of|in total", "count",
     "Count every distinct occurrence of {entity} across sessions instead of stopping at the first mention."),
    (r"most recent(?:ly)?|latest|currently|current|now|last time", "latest",
     "Compare all mentions of {entity} by date and keep only the most recent value."),
    (r"how long|how many (?:days|weeks|months|years)|between|when did|when was", "date_arithmetic",
     "Find the dates of the events involved and compute the time difference from those dates."),
    (r"first|before|after|order|earlier|later", "ordering",
     "Order the relevant events by date to establish their sequence."),
    (r"recommend|suggest|should i|any tips|ideas", "preference",
     "Recall the user's stated preferences and past experiences related to {entity} before suggesting anything."),
    (r"you (?:said|told|recommended|suggested|mentioned)", "assistant_recall",
     "Look for what the assistant said earlier about {entity}; the answer is in an assistant turn."),
)
_OPERATION_PATTERNS = tuple((re.compile(rf"\b(?:{keys})\b"), name, template) for keys, name, template in _OPERATIONS)
_MONTHS = "|".join(m.lower() for m in _MONTH_NAMES)
_TIME_PATTERNS = (
    re.compile(rf"\b(?:in|during|since|last|this|next) (?:{_MONTHS})\b"),
    re.compile(r"\b(?:last|this|next|past) (?:week|month|year|weekend)\b"),
    re.compile(rf"\b(?:{_MONTHS})(?: \d{{1,2}})?,? \d{{4}}\b"),
    re.compile(r"\bthe (?:day|week|month|year) (?:after|before) [\w' ]+"),
    re.compile(r"\b(?:yesterday|today|recently|\d+ (?:days|weeks|months) ago)\b"),
)
_OP_WORDS = frozenset(
    "most recently recent latest current currently first last before after between total number count".split()
)
_MONTH_WORDS = frozenset(m.lower() for m in _MONTH_NAMES)


def question_slots(question: str) -> dict[str, Any]:
    """Keyword-rule parse of a question into entity, operations and time constraint."""
    lowered = question.lower()
    operations = [name for pattern, name, _ in _OPERATION_PATTERNS if pattern.search(lowered)]
    time_constraint = ""
    for pattern in _TIME_PATTERNS:
        m = pattern.search(lowered)
        if m:
            time_constraint = question[m.start():m.end()].rstrip("?!. ")
            break
    time_words = set(tokenize(time_constraint))
    entity_tokens = [
        t for t in tokenize(question)
        if t not in _STOPWORDS and t not in _OP_WORDS and t not in time_words and t not in _MONTH_WORDS
    ]
    entity = " ".join(entity_tokens[:6]) or "the topic of the question"
    return {"entity": entity, "operations": operations, "time": time_constraint}


class KeywordGuidanceChat:
    """Mock guidance model: fills entity / operation / time slots by keyword rules."""

    def complete(self, messages: Sequence[Message], tools: Sequence[Mapping[str, Any]] | None = None) -> ChatReply:
        question = messages[_last_user_index(messages)].get("content") or ""
        question = question.split("Question:", 1)[-1].strip()
        slots = question_slots(question)
        entity = slots["entity"]
        bullets = [
            f"Pay close attention to the following information (current and past): details about {entity}."
        ]
        for _, name, template in _OPERATIONS:
            if name in slots["operations"]:
                bullets.append(template.format(entity=entity))
        if slots["time"]:
            bullets.append(
                f"Restrict the search to the time constraint \"{slots['time']}\" and use date filters on the event calendar."
            )
        return ChatReply(content="\n".join(f"- {b}" for b in bullets[:5]))


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


class ScriptedExtractor:
    """Returns scripted events for turns whose text appears in ``script``.

    Script values are lists of event dicts in the extractor response format
    without ``source_indices`` (the matched turn's index is filled in).
    """

    def __init__(self, script: Mapping[str, Sequence[Mapping[str, Any]]]):
        self.script = {message_key(k): [dict(e) for e in v] for k, v in script.items()}

    def extract(self, request: Mapping[str, Any]) -> dict[str, Any]:
        events = []
        for turn in request["turns"]:
            for event in self.script.get(message_key(turn["text"]), ()):
                events.append({**event, "source_indices": [turn["index"]]})
        return {"events": events}


_LEADING_ARTICLE = re.compile(r"^(?:a|an|the|my)\s+", re.IGNORECASE)
_EVENT_SENTENCE = re.compile(
    r"\bI(?: just| finally| also)? (?P<verb>[a-z]+ed|bought|went|got|began|took|made|met|ran|saw|left|paid|sold|won|lost|read|wrote|gave|flew|drove|moved)"
    r" (?P<object>[^.,;!?]+?)(?=[.,;!?]|$)"
)


class RuleExtractor:
    """Heuristic first-person event extractor for offline demos.

    Picks sentences like "I <past-tense verb> <object>" that also contain a
    recognised time expression (or fall back to the turn date) and emits
    template aliases.
    """

    def __init__(self, require_time: bool = True):
        self.require_time = require_time

    def extract(self, request: Mapping[str, Any]) -> dict[str, Any]:
        from ..temporal import Unrecognized, classify, find_span

        events = []
        for turn in request["turns"]:
            if turn.get("role") != "user":
                continue
            for sentence in re.split(r"(?<=[.!?])\s+", turn["text"]):
                m = _EVENT_SENTENCE.search(sentence)
                if not m:
                    continue
                try:
                    classify(sentence)
                    expression = sentence
                except Unrecognized:
                    if self.require_time:
                        continue
                    expression = ""
                verb, obj = m.group("verb"), " ".join(m.group("object").split())
                span = find_span(obj)
                if span:
                    obj = (obj[: span[0]] + obj[span[1]:]).strip()
                obj = _LEADING_ARTICLE.sub("", obj) or m.group("object").strip()
                events.append({
                    "subject": "user",
                    "verb": verb,
                    "object": obj,
                    "time": {"expression": expression} if expression else {},
                    "aliases": [f"user {verb} {obj}", f"{obj} ({verb})"],
                    "source_indices": [turn["index"]],
                    "surface_text": sentence.strip(),
                })
        return {"events": events}
