"""Batch sessions, call the extractor, normalize times, validate and dedupe events."""

from __future__ import annotations

import json
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Callable, Iterable, Mapping, Sequence

from .models import (
    ConversationTurn,
    DatetimeRange,
    EventRejected,
    MAX_ALIASES,
    MIN_ALIASES,
    Session,
    TemporalEvent,
    parse_datetime,
    validate_event,
)
from .prompts import load_prompt
from .providers.base import ChatProvider, Extractor, ProviderFailure, with_retry
from .temporal import Unrecognized, classify, resolve

logger = logging.getLogger(__name__)

MAX_BATCH_TURNS = 25
BATCH_OVERLAP = 5


@dataclass(frozen=True)
class TurnBatch:
    session_id: str
    turns: tuple[ConversationTurn, ...]
    batch_index: int

    @property
    def turn_indices(self) -> list[int]:
        return [t.turn_index for t in self.turns]


def chunk_session(
    session: Session, max_turns: int = MAX_BATCH_TURNS, overlap: int = BATCH_OVERLAP
) -> list[TurnBatch]:
    """Split a session into batches of at most ``max_turns`` sharing ``overlap`` turns."""
    if not session.turns:
        raise ValueError(f"session {session.session_id!r} has no turns")
    if not 0 <= overlap < max_turns:
        raise ValueError("overlap must be smaller than the batch size")
    stride = max_turns - overlap
    turns = session.turns
    batches = []
    start = 0
    while True:
        batches.append(TurnBatch(session.session_id, turns[start:start + max_turns], len(batches)))
        if start + max_turns >= len(turns):
            return batches
        start += stride


def batch_request(batch: TurnBatch) -> dict[str, Any]:
    """Extractor request payload for a batch."""
    return {
        "turns": [
            {
                "index": t.turn_index,
                "role": t.role,
                "text": t.text,
                "timestamp": t.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
            }
            for t in batch.turns
        ],
        "conversation_date": batch.turns[0].timestamp.date().isoformat(),
    }


# ---------------------------------------------------------------------------
# response -> events
# ---------------------------------------------------------------------------


def _infer_granularity(start: datetime, end: datetime) -> str:
    if start == end:
        return "instant"
    if (
        start.date() == end.date()
        and (start.hour, start.minute, start.second) == (0, 0, 0)
        and (end.hour, end.minute, end.second) == (23, 59, 59)
    ):
        return "day"
    return "window"


def resolve_event_time(spec: Mapping[str, Any] | None, ref: datetime) -> DatetimeRange:
    """Turn an extractor ``time`` object into a range anchored on the turn time.

    Explicit ranges are taken as given; expressions go through the resolver;
    anything missing or unrecognized becomes the reference day.
    """
    spec = spec or {}
    explicit = spec.get("explicit_range")
    if explicit:
        start, end = parse_datetime(explicit["start"]), parse_datetime(explicit["end"])
        granularity = explicit.get("granularity") or _infer_granularity(start, end)
        if granularity == "instant" and start != end:
            granularity = "window"
        return DatetimeRange(start, end, granularity)
    expression = spec.get("expression")
    if expression:
        anchor = spec.get("anchor_range")
        anchor_range = DatetimeRange.from_dict(anchor) if anchor else None
        try:
            return resolve(classify(expression, anchor_range), ref)
        except Unrecognized:
            logger.debug("unrecognized time expression %r; using conversation day", expression)
    return DatetimeRange.for_day(ref.date())


def _surface_sentence(turn: ConversationTurn, obj: str, verb: str) -> str:
    sentences = [s.strip() for s in re.split(r"(?<=[.!?])\s+", turn.text) if s.strip()]
    for needle in (obj, verb):
        for s in sentences:
            if needle and needle.casefold() in s.casefold():
                return s
    return sentences[0] if sentences else turn.text.strip()


def _clean_aliases(aliases: Iterable[Any], surface: str) -> list[str]:
    seen: set[str] = set()
    out = []
    for alias in aliases:
        if not isinstance(alias, str):
            continue
        alias = alias.strip()
        if not alias or alias == surface or alias.casefold() in seen:
            continue
        seen.add(alias.casefold())
        out.append(alias)
    return out


def event_from_response(raw: Mapping[str, Any], batch: TurnBatch) -> TemporalEvent:
    """Build and validate one event from an extractor response record."""
    by_index = {t.turn_index: t for t in batch.turns}
    indices = [int(i) for i in raw.get("source_indices") or ()]
    unknown = [i for i in indices if i not in by_index]
    if not indices or unknown:
        raise EventRejected(f"source indices {unknown or indices} are not turns of this batch")
    first = by_index[indices[0]]
    surface = raw.get("surface_text")
    if not isinstance(surface, str) or not surface.strip():
        surface = _surface_sentence(first, str(raw.get("object") or ""), str(raw.get("verb") or ""))
    candidate = {
        "subject": raw.get("subject"),
        "verb": raw.get("verb"),
        "object": raw.get("object"),
        "range": resolve_event_time(raw.get("time"), first.timestamp),
        "aliases": _clean_aliases(raw.get("aliases") or (), surface.strip()),
        "source": [(batch.session_id, i) for i in dict.fromkeys(indices)],
        "surface_text": surface,
    }
    return validate_event(candidate, lenient=True)


def extract_batch(
    batch: TurnBatch,
    extractor: Extractor,
    *,
    attempts: int = 3,
    base_delay: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> list[TemporalEvent]:
    """Extract validated events from one batch.

    Raises :class:`ProviderFailure` once the retry budget is spent. Records
    that fail validation are dropped and logged.
    """
    request = batch_request(batch)
    response = with_retry(
        lambda: extractor.extract(request),
        attempts=attempts,
        base_delay=base_delay,
        sleep=sleep,
        what=f"extract {batch.session_id}#{batch.batch_index}",
    )
    events = []
    for raw in response.get("events") or ():
        try:
            events.append(event_from_response(raw, batch))
        except (EventRejected, ValueError, KeyError, TypeError) as exc:
            logger.info("dropped extracted event in %s#%d: %s", batch.session_id, batch.batch_index, exc)
    return events


def dedupe_overlap(events: Sequence[TemporalEvent]) -> list[TemporalEvent]:
    """Merge events with equal case-folded SVO that share a source turn.

    Merging is transitive. The merged event keeps the first event's id,
    range and surface text, the union of sources, and at most four aliases.
    """
    parent = list(range(len(events)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner: dict[tuple[tuple[str, str, str], tuple[str, int]], int] = {}
    for i, event in enumerate(events):
        for ref in event.source:
            j = owner.setdefault((event.svo_key, ref), i)
            if j != i:
                a, b = find(i), find(j)
                if a != b:
                    parent[max(a, b)] = min(a, b)

    groups: dict[int, list[TemporalEvent]] = {}
    for i, event in enumerate(events):
        groups.setdefault(find(i), []).append(event)

    merged = []
    for root in sorted(groups):
        members = groups[root]
        base = members[0]
        if len(members) == 1:
            merged.append(base)
            continue
        sources = sorted({ref for m in members for ref in m.source})
        aliases = _clean_aliases((a for m in members for a in m.aliases), base.surface_text)[:MAX_ALIASES]
        merged.append(
            TemporalEvent(
                event_id=base.event_id,
                subject=base.subject,
                verb=base.verb,
                object=base.object,
                range=base.range,
                aliases=tuple(aliases),
                source=tuple(sources),
                surface_text=base.surface_text,
                degraded=len(aliases) < MIN_ALIASES,
            )
        )
    return merged


@dataclass
class SessionExtraction:
    session_id: str
    events: list[TemporalEvent] = field(default_factory=list)
    failed_batches: list[int] = field(default_factory=list)


def extract_session(session: Session, extractor: Extractor, **retry: Any) -> SessionExtraction:
    result = SessionExtraction(session.session_id)
    collected: list[TemporalEvent] = []
    for batch in chunk_session(session):
        try:
            collected.extend(extract_batch(batch, extractor, **retry))
        except ProviderFailure as exc:
            logger.error("extraction failed for %s batch %d: %s", session.session_id, batch.batch_index, exc)
            result.failed_batches.append(batch.batch_index)
    result.events = dedupe_overlap(collected)
    return result


def extract_sessions(
    sessions: Sequence[Session], extractor: Extractor, *, workers: int = 4, **retry: Any
) -> list[SessionExtraction]:
    """Extract all sessions concurrently; results keep the input order."""
    if workers <= 1 or len(sessions) <= 1:
        return [extract_session(s, extractor, **retry) for s in sessions]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: extract_session(s, extractor, **retry), sessions))


# ---------------------------------------------------------------------------
# LLM-backed extractor
# ---------------------------------------------------------------------------

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def parse_json_reply(text: str) -> Any:
    m = _FENCE.search(text)
    if m:
        text = m.group(1)
    start = min((i for i in (text.find("{"), text.find("[")) if i >= 0), default=-1)
    if start < 0:
        raise ValueError("no JSON object in reply")
    obj, _ = json.JSONDecoder().raw_decode(text[start:])
    return obj


class ChatExtractor:
    """Extractor that prompts a chat model and parses its JSON reply."""

    def __init__(self, chat: ChatProvider, prompt: str | None = None):
        self.chat = chat
        self.prompt = prompt or load_prompt("extractor")

    def extract(self, request: Mapping[str, Any]) -> dict[str, Any]:
        reply = self.chat.complete(
            [
                {"role": "system", "content": self.prompt},
                {"role": "user", "content": json.dumps(request, ensure_ascii=False)},
            ]
        )
        try:
            data = parse_json_reply(reply.content)
        except (ValueError, json.JSONDecodeError) as exc:
            raise ProviderFailure(f"extractor reply is not valid JSON: {exc}", retryable=True) from exc
        if isinstance(data, list):
            data = {"events": data}
        if not isinstance(data, dict) or not isinstance(data.get("events", []), list):
            raise ProviderFailure("extractor reply has no events list", retryable=True)
        return data
