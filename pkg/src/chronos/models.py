"""Shared value types for turns, sessions, events, queries and agent traces.

Every type is a frozen dataclass with ``to_dict``/``from_dict`` helpers whose
field names match the on-disk JSON-lines records.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from datetime import date, datetime, time, timezone
from typing import Any, Iterable, Literal, Mapping

Role = Literal["user", "assistant"]
Granularity = Literal["instant", "day", "week", "month", "year", "window"]
StepKind = Literal["thought", "tool_call", "observation", "answer"]

ROLES: tuple[str, ...] = ("user", "assistant")
GRANULARITIES: tuple[str, ...] = ("instant", "day", "week", "month", "year", "window")
STEP_KINDS: tuple[str, ...] = ("thought", "tool_call", "observation", "answer")

MIN_ALIASES = 2
MAX_ALIASES = 4
MAX_GUIDANCE_BULLETS = 5

_TZ_SUFFIX = re.compile(r"(?:Z|z)$")


# ---------------------------------------------------------------------------
# datetime helpers
# ---------------------------------------------------------------------------


def to_utc(value: datetime) -> datetime:
    """Return ``value`` as an aware UTC datetime; naive values are taken as UTC."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc).replace(microsecond=0)


def parse_datetime(value: str | datetime) -> datetime:
    """Parse an ISO-8601 timestamp (``Z`` suffix allowed) into UTC."""
    if isinstance(value, datetime):
        return to_utc(value)
    text = value.strip()
    if not text:
        raise ValueError("empty timestamp")
    text = _TZ_SUFFIX.sub("+00:00", text)
    return to_utc(datetime.fromisoformat(text))


def parse_date(value: str | date) -> date:
    if isinstance(value, datetime):
        return to_utc(value).date()
    if isinstance(value, date):
        return value
    text = value.strip()
    if "T" in text or " " in text:
        return parse_datetime(text).date()
    return date.fromisoformat(text)


def format_datetime(value: datetime) -> str:
    return to_utc(value).strftime("%Y-%m-%dT%H:%M:%SZ")


def day_start(d: date) -> datetime:
    return datetime.combine(d, time(0, 0, 0), tzinfo=timezone.utc)


def day_end(d: date) -> datetime:
    return datetime.combine(d, time(23, 59, 59), tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# conversation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConversationTurn:
    """One message of a dated session; ``timestamp`` is the conversation time."""

    session_id: str
    turn_index: int
    role: Role
    text: str
    timestamp: datetime

    def __post_init__(self) -> None:
        if not isinstance(self.turn_index, int) or self.turn_index < 0:
            raise ValueError(f"turn_index must be a non-negative int, got {self.turn_index!r}")
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not self.text or not self.text.strip():
            raise ValueError("turn text must be non-empty")
        object.__setattr__(self, "timestamp", parse_datetime(self.timestamp))

    @property
    def key(self) -> tuple[str, int]:
        return (self.session_id, self.turn_index)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "role": self.role,
            "text": self.text,
            "timestamp": format_datetime(self.timestamp),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ConversationTurn:
        return cls(
            session_id=str(data["session_id"]),
            turn_index=int(data["turn_index"]),
            role=data["role"],
            text=data["text"],
            timestamp=parse_datetime(data["timestamp"]),
        )


@dataclass(frozen=True)
class Session:
    session_id: str
    date: date
    turns: tuple[ConversationTurn, ...]

    def __post_init__(self) -> None:
        turns = tuple(sorted(self.turns, key=lambda t: t.turn_index))
        object.__setattr__(self, "turns", turns)
        object.__setattr__(self, "date", parse_date(self.date))
        seen: set[int] = set()
        for turn in turns:
            if turn.session_id != self.session_id:
                raise ValueError(
                    f"turn {turn.turn_index} belongs to {turn.session_id!r}, not {self.session_id!r}"
                )
            if turn.turn_index in seen:
                raise ValueError(f"duplicate turn_index {turn.turn_index} in {self.session_id!r}")
            seen.add(turn.turn_index)

    @classmethod
    def from_messages(
        cls,
        session_id: str,
        when: datetime | str,
        messages: Iterable[tuple[str, str]],
    ) -> Session:
        """Build a session whose turns all carry the session timestamp."""
        ts = parse_datetime(when)
        turns = tuple(
            ConversationTurn(session_id, i, role, text, ts)  # type: ignore[arg-type]
            for i, (role, text) in enumerate(messages)
        )
        return cls(session_id, ts.date(), turns)

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "date": self.date.isoformat(),
            "turns": [t.to_dict() for t in self.turns],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Session:
        return cls(
            session_id=str(data["session_id"]),
            date=parse_date(data["date"]),
            turns=tuple(ConversationTurn.from_dict(t) for t in data["turns"]),
        )


# ---------------------------------------------------------------------------
# time ranges and events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DatetimeRange:
    """Closed UTC interval ``[start, end]`` tagged with its natural unit."""

    start: datetime
    end: datetime
    granularity: Granularity = "window"

    def __post_init__(self) -> None:
        start = parse_datetime(self.start)
        end = parse_datetime(self.end)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if start > end:
            raise ValueError(f"range start {start} is after end {end}")
        if self.granularity == "instant" and start != end:
            raise ValueError("instant ranges must have start == end")

    @classmethod
    def instant(cls, when: datetime) -> DatetimeRange:
        return cls(when, when, "instant")

    @classmethod
    def for_day(cls, d: date) -> DatetimeRange:
        return cls(day_start(d), day_end(d), "day")

    @classmethod
    def for_days(cls, first: date, last: date, granularity: Granularity = "window") -> DatetimeRange:
        return cls(day_start(first), day_end(last), granularity)

    def intersects(self, other: DatetimeRange) -> bool:
        return self.start <= other.end and other.start <= self.end

    def contains(self, when: datetime) -> bool:
        return self.start <= when <= self.end

    def to_dict(self) -> dict[str, Any]:
        return {
            "start": format_datetime(self.start),
            "end": format_datetime(self.end),
            "granularity": self.granularity,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> DatetimeRange:
        return cls(
            parse_datetime(data["start"]),
            parse_datetime(data["end"]),
            data.get("granularity", "window"),
        )

    def describe(self) -> str:
        if self.granularity == "instant":
            return format_datetime(self.start)
        first, last = self.start.date(), self.end.date()
        if first == last:
            return first.isoformat()
        return f"{first.isoformat()}..{last.isoformat()}"


class EventRejected(ValueError):
    """A candidate event violated one of the event rules."""

    rule = "invalid"


class MissingField(EventRejected):
    rule = "missing_field"

    def __init__(self, field_name: str):
        super().__init__(f"missing or empty field: {field_name}")
        self.field_name = field_name


class RangeInverted(EventRejected):
    rule = "range_inverted"


class AliasCount(EventRejected):
    rule = "alias_count"


class InvalidAlias(EventRejected):
    rule = "invalid_alias"


class UnknownSource(EventRejected):
    rule = "unknown_source"


@dataclass(frozen=True)
class TemporalEvent:
    """A subject-verb-object occurrence with the span of when it could have happened.

    ``degraded`` marks events kept with fewer than two aliases.
    """

    event_id: str
    subject: str
    verb: str
    object: str
    range: DatetimeRange
    aliases: tuple[str, ...]
    source: tuple[tuple[str, int], ...]
    surface_text: str
    degraded: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "aliases", tuple(self.aliases))
        object.__setattr__(self, "source", tuple((str(s), int(i)) for s, i in self.source))

    @property
    def svo(self) -> str:
        return f"{self.subject} {self.verb} {self.object}"

    @property
    def svo_key(self) -> tuple[str, str, str]:
        return (self.subject.casefold(), self.verb.casefold(), self.object.casefold())

    @property
    def search_text(self) -> str:
        return " | ".join([self.surface_text, self.svo, *self.aliases])

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "subject": self.subject,
            "verb": self.verb,
            "object": self.object,
            "range": self.range.to_dict(),
            "aliases": list(self.aliases),
            "source": [[s, i] for s, i in self.source],
            "surface_text": self.surface_text,
            "degraded": self.degraded,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TemporalEvent:
        return cls(
            event_id=data["event_id"],
            subject=data["subject"],
            verb=data["verb"],
            object=data["object"],
            range=DatetimeRange.from_dict(data["range"]),
            aliases=tuple(data["aliases"]),
            source=tuple((s, int(i)) for s, i in data["source"]),
            surface_text=data["surface_text"],
            degraded=bool(data.get("degraded", False)),
        )


def make_event_id(
    subject: str, verb: str, obj: str, source: Iterable[tuple[str, int]], start: datetime
) -> str:
    h = hashlib.sha1()
    for part in (subject.casefold(), verb.casefold(), obj.casefold(), format_datetime(start)):
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    for session_id, idx in sorted(source):
        h.update(f"{session_id}#{idx}".encode("utf-8"))
        h.update(b"\x1e")
    return "ev_" + h.hexdigest()[:12]


def _text_field(candidate: Mapping[str, Any], name: str) -> str:
    value = candidate.get(name)
    if not isinstance(value, str) or not value.strip():
        raise MissingField(name)
    return value.strip()


def validate_event(
    candidate: Mapping[str, Any],
    *,
    lenient: bool = False,
    known_turns: set[tuple[str, int]] | None = None,
) -> TemporalEvent:
    """Turn a raw extracted record into a :class:`TemporalEvent` or raise.

    ``candidate`` carries ``subject``, ``verb``, ``object``, ``range`` (a
    :class:`DatetimeRange` or its dict form, or ``start``/``end`` keys),
    ``aliases``, ``source`` and ``surface_text``; ``event_id`` is optional.

    Strict mode enforces 2-4 aliases. Lenient mode (used during ingestion)
    keeps the first four aliases and keeps events with fewer than two, marked
    ``degraded``. Rules are checked in order and the first failure is raised.
    """
    subject = _text_field(candidate, "subject")
    verb = _text_field(candidate, "verb")
    obj = _text_field(candidate, "object")

    rng = candidate.get("range")
    if isinstance(rng, DatetimeRange):
        time_range = rng
    else:
        if isinstance(rng, Mapping):
            raw_start, raw_end = rng.get("start"), rng.get("end")
            granularity = rng.get("granularity", "window")
        else:
            raw_start, raw_end = candidate.get("start"), candidate.get("end")
            granularity = candidate.get("granularity", "window")
        if raw_start is None or raw_end is None:
            raise MissingField("range")
        start, end = parse_datetime(raw_start), parse_datetime(raw_end)
        if start > end:
            raise RangeInverted(f"start {format_datetime(start)} after end {format_datetime(end)}")
        if granularity == "instant" and start != end:
            granularity = "window"
        time_range = DatetimeRange(start, end, granularity)

    surface = candidate.get("surface_text")
    surface = surface.strip() if isinstance(surface, str) else ""
    if not surface:
        raise MissingField("surface_text")

    aliases = [a for a in candidate.get("aliases") or ()]
    for alias in aliases:
        if not isinstance(alias, str) or not alias.strip():
            raise InvalidAlias("empty alias")
        if alias == surface:
            raise InvalidAlias(f"alias repeats surface text: {alias!r}")
    degraded = False
    if lenient:
        aliases = aliases[:MAX_ALIASES]
        degraded = len(aliases) < MIN_ALIASES
    elif not MIN_ALIASES <= len(aliases) <= MAX_ALIASES:
        raise AliasCount(f"expected {MIN_ALIASES}-{MAX_ALIASES} aliases, got {len(aliases)}")

    source = tuple((str(s), int(i)) for s, i in candidate.get("source") or ())
    if not source:
        raise MissingField("source")
    if known_turns is not None:
        for ref in source:
            if ref not in known_turns:
                raise UnknownSource(f"source turn {ref} was not ingested")

    event_id = candidate.get("event_id") or make_event_id(subject, verb, obj, source, time_range.start)
    return TemporalEvent(
        event_id=event_id,
        subject=subject,
        verb=verb,
        object=obj,
        range=time_range,
        aliases=tuple(aliases),
        source=source,
        surface_text=surface,
        degraded=degraded,
    )


# ---------------------------------------------------------------------------
# queries, guidance, traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MemoryQuery:
    question: str
    question_date: date

    def __post_init__(self) -> None:
        if not self.question or not self.question.strip():
            raise ValueError("question must be non-empty")
        object.__setattr__(self, "question_date", parse_date(self.question_date))

    def to_dict(self) -> dict[str, Any]:
        return {"question": self.question, "question_date": self.question_date.isoformat()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MemoryQuery:
        return cls(data["question"], parse_date(data["question_date"]))


@dataclass(frozen=True)
class RetrievalGuidance:
    bullets: tuple[str, ...]
    degraded: bool = False

    def __post_init__(self) -> None:
        bullets = tuple(self.bullets)
        object.__setattr__(self, "bullets", bullets)
        if not 1 <= len(bullets) <= MAX_GUIDANCE_BULLETS:
            raise ValueError(f"guidance needs 1-{MAX_GUIDANCE_BULLETS} bullets, got {len(bullets)}")
        if any(not b or not b.strip() for b in bullets):
            raise ValueError("guidance bullets must be non-empty")

    def render(self) -> str:
        return "\n".join(f"- {b}" for b in self.bullets)

    def to_dict(self) -> dict[str, Any]:
        return {"bullets": list(self.bullets), "degraded": self.degraded}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RetrievalGuidance:
        return cls(tuple(data["bullets"]), bool(data.get("degraded", False)))


@dataclass(frozen=True)
class TraceStep:
    kind: StepKind
    payload: Any

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "payload": self.payload}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TraceStep:
        return cls(data["kind"], data["payload"])


@dataclass(frozen=True)
class AgentTrace:
    """Ordered thought / tool call / observation steps ending in one answer."""

    steps: tuple[TraceStep, ...]
    final_answer: str
    metadata: dict[str, Any] = field(default_factory=dict, compare=True)

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple(self.steps))
        check_trace(self.steps)

    def tool_calls(self) -> list[dict[str, Any]]:
        return [s.payload for s in self.steps if s.kind == "tool_call"]

    def observations(self) -> list[dict[str, Any]]:
        return [s.payload for s in self.steps if s.kind == "observation"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AgentTrace:
        return cls(
            tuple(TraceStep.from_dict(s) for s in data["steps"]),
            data["final_answer"],
            dict(data.get("metadata", {})),
        )


def check_trace(steps: tuple[TraceStep, ...]) -> None:
    """Raise ``ValueError`` unless the steps form a well-formed trace."""
    if not steps or steps[-1].kind != "answer":
        raise ValueError("trace must end with an answer step")
    if sum(1 for s in steps if s.kind == "answer") != 1:
        raise ValueError("trace must contain exactly one answer step")
    for i, step in enumerate(steps):
        if step.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {step.kind!r}")
        if step.kind == "tool_call" and steps[i + 1].kind != "observation":
            raise ValueError(f"tool_call at step {i} is not followed by an observation")
