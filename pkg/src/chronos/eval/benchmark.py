"""LongMemEval-format loading."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

from ..models import Session, parse_datetime

CATEGORY_CODES = {
    "knowledge-update": "KU",
    "multi-session": "MS",
    "single-session-assistant": "SSA",
    "single-session-preference": "SSP",
    "single-session-user": "SSU",
    "temporal-reasoning": "TR",
}
CATEGORY_ORDER = ("KU", "MS", "SSA", "SSP", "SSU", "TR")
EXPECTED_COUNTS = {"KU": 78, "MS": 133, "SSA": 56, "SSP": 30, "SSU": 70, "TR": 133}

_BENCH_DATE = re.compile(r"^\s*(\d{4})/(\d{2})/(\d{2})(?:\s*\([A-Za-z]{3}\))?(?:\s+(\d{1,2}):(\d{2}))?\s*$")


class BenchmarkFormatError(ValueError):
    pass


def parse_bench_datetime(value: str) -> datetime:
    """Parse ``2023/05/30 (Tue) 23:40`` (the benchmark's layout) or ISO-8601."""
    m = _BENCH_DATE.match(value)
    if m:
        y, mo, d, hh, mm = m.groups()
        return datetime(int(y), int(mo), int(d), int(hh or 0), int(mm or 0), tzinfo=timezone.utc)
    return parse_datetime(value)


@dataclass(frozen=True)
class BenchmarkQuestion:
    question_id: str
    question: str
    answer: str
    question_type: str
    question_date: date
    haystack: tuple[Session, ...]
    answer_session_ids: tuple[str, ...] = ()
    evidence_turns: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        if self.question_type not in CATEGORY_CODES:
            raise ValueError(f"unknown question_type {self.question_type!r}")

    @property
    def category(self) -> str:
        return CATEGORY_CODES[self.question_type]

    @property
    def abstention(self) -> bool:
        return self.question_id.endswith("_abs")

    @property
    def haystack_key(self) -> tuple:
        return tuple((s.session_id, s.date.isoformat(), len(s.turns)) for s in self.haystack)


def _parse_record(i: int, rec: Any) -> BenchmarkQuestion:
    if not isinstance(rec, dict):
        raise BenchmarkFormatError(f"record {i}: expected an object, got {type(rec).__name__}")
    missing = [
        k for k in ("question_id", "question_type", "question", "answer", "question_date",
                    "haystack_session_ids", "haystack_dates", "haystack_sessions")
        if k not in rec
    ]
    if missing:
        raise BenchmarkFormatError(f"record {i} ({rec.get('question_id', '?')}): missing {', '.join(missing)}")
    qid = str(rec["question_id"])
    ids, dates, sessions = rec["haystack_session_ids"], rec["haystack_dates"], rec["haystack_sessions"]
    if not (len(ids) == len(dates) == len(sessions)):
        raise BenchmarkFormatError(f"record {i} ({qid}): haystack id/date/session lists differ in length")
    try:
        haystack = []
        evidence = []
        for sid, when, messages in zip(ids, dates, sessions):
            sid = str(sid)
            ts = parse_bench_datetime(when)
            pairs = [(m["role"], m["content"]) for m in messages]
            if not pairs:
                continue
            haystack.append(Session.from_messages(sid, ts, pairs))
            evidence.extend((sid, j) for j, m in enumerate(messages) if m.get("has_answer"))
        return BenchmarkQuestion(
            question_id=qid,
            question=str(rec["question"]),
            answer=str(rec["answer"]),
            question_type=str(rec["question_type"]),
            question_date=parse_bench_datetime(rec["question_date"]).date(),
            haystack=tuple(haystack),
            answer_session_ids=tuple(str(s) for s in rec.get("answer_session_ids") or ()),
            evidence_turns=tuple(evidence),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BenchmarkFormatError(f"record {i} ({qid}): {exc}") from exc


def parse_benchmark(records: Any) -> list[BenchmarkQuestion]:
    if not isinstance(records, list):
        raise BenchmarkFormatError("benchmark file must hold a JSON list of question records")
    if not records:
        raise BenchmarkFormatError("benchmark file contains no questions")
    return [_parse_record(i, rec) for i, rec in enumerate(records)]


def load_benchmark(path: str | Path) -> list[BenchmarkQuestion]:
    """Load every question or raise; never returns a partial list."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise BenchmarkFormatError(f"{path} is empty")
    try:
        records = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BenchmarkFormatError(f"{path} is not valid JSON: {exc}") from exc
    return parse_benchmark(records)


def category_counts(questions: Iterable[BenchmarkQuestion]) -> dict[str, int]:
    counts = Counter(q.category for q in questions)
    return {code: counts.get(code, 0) for code in CATEGORY_ORDER}


def apply_exclusions(questions: Sequence[BenchmarkQuestion], excluded: Iterable[str]) -> list[BenchmarkQuestion]:
    drop = set(excluded)
    return [q for q in questions if q.question_id not in drop]
