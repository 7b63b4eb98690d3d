"""Turn and event calendars: exact cosine search, substring grep, range filters.

An index is an immutable snapshot. Vectors are unit-normalized at ingest and
kept as float32, which is also the on-disk sidecar format, so a saved and
reloaded index answers every query identically.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import threading
from dataclasses import dataclass, field
from datetime import date
from functools import cached_property
from pathlib import Path
from typing import Iterable, Literal, Sequence, Union

import numpy as np

from .models import ConversationTurn, DatetimeRange, Session, TemporalEvent
from .providers.base import Embedder

IndexKind = Literal["turns", "events"]
Payload = Union[ConversationTurn, TemporalEvent]

SIDECAR_HEADER = struct.Struct("<II")  # dimensionality, count


class DimensionMismatch(ValueError):
    pass


class EmbedderFailure(RuntimeError):
    """The embedder failed or returned unusable vectors; nothing was indexed."""


def turn_id(session_id: str, turn_index: int) -> str:
    return f"{session_id}#{turn_index:04d}"


@dataclass(frozen=True)
class CalendarRecord:
    id: str
    payload: Payload
    range: DatetimeRange
    text: str


def _record_for(payload: Payload) -> CalendarRecord:
    if isinstance(payload, ConversationTurn):
        return CalendarRecord(
            turn_id(payload.session_id, payload.turn_index),
            payload,
            DatetimeRange.instant(payload.timestamp),
            payload.text,
        )
    return CalendarRecord(payload.event_id, payload, payload.range, payload.search_text)


def normalize_rows(vectors: np.ndarray) -> np.ndarray:
    """Unit-normalize rows and cast to float32; rejects zero / non-finite rows."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError("expected a 2-d array of vectors")
    if not np.all(np.isfinite(vectors)):
        raise ValueError("vectors contain NaN or Inf")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ValueError("zero vectors cannot be indexed")
    return (vectors / norms[:, None]).astype(np.float32)


class CalendarIndex:
    """Immutable snapshot of one calendar."""

    def __init__(
        self,
        kind: IndexKind,
        records: Sequence[CalendarRecord],
        vectors: np.ndarray,
        *,
        prenormalized: bool = False,
    ):
        ids = [r.id for r in records]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate record ids in {kind} index")
        if len(records) and vectors.shape[0] != len(records):
            raise ValueError("one vector per record is required")
        self.kind = kind
        self.records: tuple[CalendarRecord, ...] = tuple(records)
        if len(records):
            self.vectors = vectors.astype(np.float32) if prenormalized else normalize_rows(vectors)
        else:
            self.vectors = np.zeros((0, vectors.shape[1] if vectors.ndim == 2 else 0), dtype=np.float32)
        self.vectors.setflags(write=False)
        self._by_id = {r.id: i for i, r in enumerate(self.records)}
        self._id_rank = np.argsort(np.argsort(np.array(ids, dtype=object))) if ids else np.zeros(0, dtype=int)
        self._norms = np.linalg.norm(self.vectors.astype(np.float64), axis=1)
        self._starts = np.array([r.range.start.timestamp() for r in self.records], dtype=np.float64)
        self._ends = np.array([r.range.end.timestamp() for r in self.records], dtype=np.float64)
        self._lower = [r.text.lower() for r in self.records]

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, record_id: object) -> bool:
        return record_id in self._by_id

    def get(self, record_id: str) -> CalendarRecord:
        return self.records[self._by_id[record_id]]

    @property
    def text_corpus(self) -> dict[str, str]:
        return {r.id: r.text for r in self.records}

    def _mask(self, time_range: DatetimeRange | None) -> np.ndarray:
        if time_range is None:
            return np.ones(len(self.records), dtype=bool)
        lo, hi = time_range.start.timestamp(), time_range.end.timestamp()
        return (self._starts <= hi) & (lo <= self._ends)

    def range_filter(self, time_range: DatetimeRange) -> list[str]:
        """Ids whose range intersects ``time_range`` (closed intervals), in index order."""
        mask = self._mask(time_range)
        return [self.records[i].id for i in np.flatnonzero(mask)]

    def vector_search(
        self, query_vec: Sequence[float] | np.ndarray, k: int, time_range: DatetimeRange | None = None
    ) -> list[tuple[str, float]]:
        """Exact top-``k`` by cosine similarity; ties go to the smaller id."""
        if k <= 0:
            raise ValueError("k must be positive")
        q = np.asarray(query_vec, dtype=np.float64)
        if q.ndim != 1 or (len(self.records) and q.shape[0] != self.dimension):
            raise DimensionMismatch(f"query has shape {q.shape}, index dimension is {self.dimension}")
        if not len(self.records):
            return []
        qn = np.linalg.norm(q)
        if qn == 0.0 or not np.isfinite(qn):
            raise ValueError("query vector must be finite and non-zero")
        eligible = np.flatnonzero(self._mask(time_range))
        if eligible.size == 0:
            return []
        scores = (self.vectors[eligible].astype(np.float64) @ q) / (self._norms[eligible] * qn)
        order = np.lexsort((self._id_rank[eligible], -scores))[:k]
        return [(self.records[eligible[i]].id, float(scores[i])) for i in order]

    def grep(
        self, pattern: str, time_range: DatetimeRange | None = None, limit: int = 50
    ) -> list[tuple[str, str]]:
        """Case-insensitive substring hits ordered by record start time, then id."""
        if not pattern:
            raise ValueError("grep pattern must be non-empty")
        if limit <= 0:
            raise ValueError("limit must be positive")
        needle = pattern.lower()
        mask = self._mask(time_range)
        hits = [i for i in np.flatnonzero(mask) if needle in self._lower[i]]
        hits.sort(key=lambda i: (self._starts[i], self.records[i].id))
        return [(self.records[i].id, self.records[i].text) for i in hits[:limit]]


def _embed_all(texts: list[str], embedder: Embedder) -> np.ndarray:
    if not texts:
        return np.zeros((0, embedder.dimension), dtype=np.float64)
    try:
        vectors = embedder.embed(texts)
    except Exception as exc:  # any embedder error aborts the whole job
        raise EmbedderFailure(f"embedding failed: {exc}") from exc
    if len(vectors) != len(texts):
        raise EmbedderFailure(f"embedder returned {len(vectors)} vectors for {len(texts)} texts")
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise EmbedderFailure(f"embedder returned mixed dimensionalities {sorted(dims)}")
    return np.vstack([np.asarray(v, dtype=np.float64) for v in vectors])


def build_index(kind: IndexKind, payloads: Iterable[Payload], embedder: Embedder) -> CalendarIndex:
    records = [_record_for(p) for p in payloads]
    vectors = _embed_all([r.text for r in records], embedder)
    try:
        return CalendarIndex(kind, records, vectors)
    except ValueError as exc:
        raise EmbedderFailure(str(exc)) from exc


def index_turns(turns: Iterable[ConversationTurn], embedder: Embedder) -> CalendarIndex:
    return build_index("turns", turns, embedder)


def index_events(events: Iterable[TemporalEvent], embedder: Embedder) -> CalendarIndex:
    """Index events; searchable text is surface text, "subject verb object" and aliases."""
    return build_index("events", events, embedder)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def write_sidecar(path: Path, vectors: np.ndarray) -> None:
    count = vectors.shape[0]
    dim = vectors.shape[1] if vectors.ndim == 2 else 0
    with open(path, "wb") as fh:
        fh.write(SIDECAR_HEADER.pack(dim, count))
        fh.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes())


def read_sidecar(path: Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    dim, count = SIDECAR_HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f4", offset=SIDECAR_HEADER.size)
    if body.size != dim * count:
        raise ValueError(f"{path}: header says {count}x{dim} floats, body has {body.size}")
    return body.reshape(count, dim).astype(np.float32)


def _write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def read_jsonl(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_index(index: CalendarIndex, directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_jsonl(directory / f"{index.kind}.jsonl", (r.payload.to_dict() for r in index.records))
    write_sidecar(directory / f"{index.kind}.embeddings.bin", index.vectors)


def load_index(kind: IndexKind, directory: Path) -> CalendarIndex:
    directory = Path(directory)
    rows = read_jsonl(directory / f"{kind}.jsonl")
    cls = ConversationTurn if kind == "turns" else TemporalEvent
    records = [_record_for(cls.from_dict(row)) for row in rows]
    vectors = read_sidecar(directory / f"{kind}.embeddings.bin")
    if vectors.shape[0] != len(records):
        raise ValueError(f"{kind}: {len(records)} records but {vectors.shape[0]} vectors")
    return CalendarIndex(kind, records, vectors, prenormalized=True)


# ---------------------------------------------------------------------------
# the two calendars together
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalendarSnapshot:
    turns: CalendarIndex
    events: CalendarIndex
    session_dates: dict[str, date] = field(default_factory=dict)

    def session_number(self, session_id: str) -> int:
        """1-based chronological position of a session in the haystack."""
        return self._order[session_id]

    @cached_property
    def _order(self) -> dict[str, int]:
        ordered = sorted(self.session_dates, key=lambda s: (self.session_dates[s], s))
        return {s: i + 1 for i, s in enumerate(ordered)}

    def turn(self, session_id: str, turn_index: int) -> ConversationTurn | None:
        rid = turn_id(session_id, turn_index)
        if rid not in self.turns:
            return None
        return self.turns.get(rid).payload  # type: ignore[return-value]


def _session_dates(turns: CalendarIndex) -> dict[str, date]:
    dates: dict[str, date] = {}
    for rec in turns.records:
        turn: ConversationTurn = rec.payload  # type: ignore[assignment]
        d = turn.timestamp.date()
        if turn.session_id not in dates or d < dates[turn.session_id]:
            dates[turn.session_id] = d
    return dates


class CalendarStore:
    """Holds the current snapshot; writers build a new one and swap it in."""

    def __init__(self, snapshot: CalendarSnapshot | None = None, dimension: int = 0):
        empty = CalendarIndex("turns", [], np.zeros((0, dimension)))
        self._snapshot = snapshot or CalendarSnapshot(empty, CalendarIndex("events", [], np.zeros((0, dimension))))
        self._lock = threading.Lock()

    @property
    def snapshot(self) -> CalendarSnapshot:
        return self._snapshot

    @classmethod
    def build(
        cls,
        sessions: Sequence[Session],
        events: Sequence[TemporalEvent],
        embedder: Embedder,
    ) -> CalendarStore:
        turns = [t for s in sessions for t in s.turns]
        known = {t.key for t in turns}
        for ev in events:
            missing = [ref for ref in ev.source if ref not in known]
            if missing:
                raise ValueError(f"event {ev.event_id} references unknown turns {missing}")
        turn_index = index_turns(turns, embedder)
        event_index = index_events(events, embedder)
        dates = {s.session_id: s.date for s in sessions}
        return cls(CalendarSnapshot(turn_index, event_index, dates))

    def publish(self, turns: CalendarIndex | None = None, events: CalendarIndex | None = None) -> CalendarSnapshot:
        with self._lock:
            old = self._snapshot
            new_turns = turns if turns is not None else old.turns
            dates = _session_dates(new_turns) if turns is not None else old.session_dates
            self._snapshot = CalendarSnapshot(new_turns, events if events is not None else old.events, dates)
            return self._snapshot

    def add_events(self, events: Sequence[TemporalEvent], embedder: Embedder) -> CalendarSnapshot:
        """Append events (safe with concurrent writers) and publish a new snapshot."""
        fresh = index_events(events, embedder) if events else None
        with self._lock:
            old = self._snapshot
            if fresh is None:
                return old
            kept = [r for r in old.events.records if r.id not in fresh]
            records = kept + list(fresh.records)
            vectors = np.vstack([old.events.vectors[[old.events._by_id[r.id] for r in kept]], fresh.vectors]) \
                if kept else fresh.vectors
            merged = CalendarIndex("events", records, vectors, prenormalized=True)
            self._snapshot = CalendarSnapshot(old.turns, merged, old.session_dates)
            return self._snapshot

    def save(self, directory: str | os.PathLike) -> None:
        snap = self._snapshot
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        # write into a temp dir first so a crash never leaves a half-written store
        with tempfile.TemporaryDirectory(dir=directory) as tmp:
            save_index(snap.turns, Path(tmp))
            save_index(snap.events, Path(tmp))
            for name in os.listdir(tmp):
                os.replace(Path(tmp) / name, directory / name)

    @classmethod
    def load(cls, directory: str | os.PathLike) -> CalendarStore:
        turns = load_index("turns", Path(directory))
        events = load_index("events", Path(directory))
        return cls(CalendarSnapshot(turns, events, _session_dates(turns)))
