"""Per-question pipeline runs with ablation switches."""

from __future__ import annotations

import json
import logging
import re
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from ..agent import EVENT_TOOLS, GREP_TOOLS, SEARCH_TOOLS, TOOL_NAMES, AgentConfig, run_agent
from ..extraction import extract_sessions
from ..models import MemoryQuery
from ..providers.base import ProviderFailure
from ..store import CalendarStore, turn_id
from .benchmark import BenchmarkQuestion
from .judge import StringMatchJudge, is_refusal

logger = logging.getLogger(__name__)

ABLATION_FLAGS = (
    "no_initial_retrieval",
    "no_dynamic_prompting",
    "no_rerank",
    "no_date_filter",
    "grep_only",
    "vector_only",
    "turns_only",
)


@dataclass(frozen=True)
class AblationConfig:
    flags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        flags = frozenset(self.flags)
        object.__setattr__(self, "flags", flags)
        unknown = flags - set(ABLATION_FLAGS)
        if unknown:
            raise ValueError(f"unknown ablation flags: {', '.join(sorted(unknown))}")
        if {"grep_only", "vector_only"} <= flags:
            raise ValueError("grep_only and vector_only are mutually exclusive")

    @classmethod
    def parse(cls, text: str | Iterable[str] | None) -> AblationConfig:
        if text is None:
            return cls()
        parts = re.split(r"[,+\s]+", text) if isinstance(text, str) else list(text)
        return cls(frozenset(p.strip() for p in parts if p and p.strip() and p.strip() != "full"))

    @property
    def label(self) -> str:
        return "+".join(f for f in ABLATION_FLAGS if f in self.flags) or "full"

    def agent_config(self, max_steps: int = 10) -> AgentConfig:
        tools: tuple[str, ...] = TOOL_NAMES
        if "grep_only" in self.flags:
            tools = GREP_TOOLS
        elif "vector_only" in self.flags:
            tools = SEARCH_TOOLS
        if "turns_only" in self.flags:
            tools = tuple(t for t in tools if t not in EVENT_TOOLS)
        return AgentConfig(
            max_steps=max_steps,
            initial_retrieval="no_initial_retrieval" not in self.flags,
            dynamic_prompting="no_dynamic_prompting" not in self.flags,
            rerank="no_rerank" not in self.flags,
            date_filter="no_date_filter" not in self.flags,
            tools=tools,
        )


class IndexCache:
    """Builds each distinct haystack once; concurrent requests for the same one wait."""

    def __init__(self, providers: Any, extraction_workers: int = 4):
        self.providers = providers
        self.extraction_workers = extraction_workers
        self._lock = threading.Lock()
        self._builds: dict[tuple, Future] = {}

    def get(self, q: BenchmarkQuestion) -> tuple[CalendarStore, dict[str, Any]]:
        with self._lock:
            fut = self._builds.get(q.haystack_key)
            owner = fut is None
            if owner:
                fut = self._builds[q.haystack_key] = Future()
        if owner:
            try:
                fut.set_result(self._build(q))
            except BaseException as exc:
                fut.set_exception(exc)
        return fut.result()

    def _build(self, q: BenchmarkQuestion) -> tuple[CalendarStore, dict[str, Any]]:
        extractions = extract_sessions(list(q.haystack), self.providers.extractor, workers=self.extraction_workers)
        events = [e for x in extractions for e in x.events]
        store = CalendarStore.build(list(q.haystack), events, self.providers.embedder)
        info = {
            "sessions": len(q.haystack),
            "turns": len(store.snapshot.turns),
            "events": len(events),
            "failed_batches": sum(len(x.failed_batches) for x in extractions),
        }
        return store, info


def retrieved_ids(trace_dict: dict[str, Any]) -> set[str]:
    meta = trace_dict.get("metadata", {})
    ids = set(meta.get("retrieval", {}).get("included_ids", ()))
    for step in trace_dict.get("steps", ()):
        if step["kind"] == "observation":
            ids.update(step["payload"].get("record_ids", ()))
    return ids


def classify_error(q: BenchmarkQuestion, hypothesis: str, trace_dict: dict[str, Any], store: CalendarStore | None,
                   failed: bool) -> str:
    """Rule-based bucket for an incorrect answer.

    Checked in order: run failure, fabricated answer to an unanswerable
    question, evidence never surfaced, counting/arithmetic, temporal.
    """
    if failed:
        return "other"
    if q.abstention and not is_refusal(hypothesis):
        return "fabrication"
    if q.evidence_turns and store is not None:
        evidence = {turn_id(s, i) for s, i in q.evidence_turns}
        seen = retrieved_ids(trace_dict)
        snap = store.snapshot
        for rid in seen & set(snap.events.text_corpus):
            ev = snap.events.get(rid).payload
            seen.update(turn_id(s, i) for s, i in ev.source)
        if not evidence & seen:
            return "retrieval_failure"
    lowered = q.question.lower()
    if q.category == "MS" or re.search(r"\bhow (?:many|much)\b|\btotal\b", lowered):
        return "counting_arithmetic"
    if q.category in ("TR", "KU"):
        return "temporal"
    return "other"


def run_question(
    q: BenchmarkQuestion,
    ablation: AblationConfig,
    providers: Any,
    *,
    judge: Any = None,
    cache: IndexCache | None = None,
    max_steps: int = 10,
) -> dict[str, Any]:
    """Run one question end to end. Failures become incorrect-with-error records."""
    judge = judge or StringMatchJudge()
    cache = cache or IndexCache(providers)
    record: dict[str, Any] = {
        "question_id": q.question_id,
        "question_type": q.question_type,
        "category": q.category,
        "abstention": q.abstention,
        "ablation": ablation.label,
        "question": q.question,
        "answer": q.answer,
    }
    store = None
    try:
        store, info = cache.get(q)
        record["index"] = info
        answer, trace = run_agent(MemoryQuery(q.question, q.question_date), store, providers,
                                  ablation.agent_config(max_steps))
        trace_dict = trace.to_dict()
        failed = bool(trace.metadata.get("failed"))
        error = trace.metadata.get("error")
    except (ProviderFailure, ValueError) as exc:
        logger.error("question %s failed: %s", q.question_id, exc)
        answer, trace_dict, failed, error = "", {"steps": [], "metadata": {}}, True, str(exc)
    record.update(hypothesis=answer, failed=failed, error=error, trace=trace_dict)
    if failed:
        record.update(correct=False, judge_available=True, judge_raw="run failed")
    else:
        verdict = judge.judge(answer, q)
        record.update(correct=verdict.correct, judge_available=verdict.available, judge_raw=verdict.raw)
    record["error_category"] = (
        None if record["correct"] or not record["judge_available"]
        else classify_error(q, answer, trace_dict, store, failed)
    )
    return record


def run_eval(
    questions: Sequence[BenchmarkQuestion],
    providers: Any,
    ablations: Sequence[AblationConfig] = (AblationConfig(),),
    *,
    judge: Any = None,
    workers: int = 4,
    max_steps: int = 10,
) -> list[dict[str, Any]]:
    """Every (ablation, question) pair; output order is ablation-major, then input order."""
    cache = IndexCache(providers)
    jobs = [(a, q) for a in ablations for q in questions]

    def one(job: tuple[AblationConfig, BenchmarkQuestion]) -> dict[str, Any]:
        a, q = job
        return run_question(q, a, providers, judge=judge, cache=cache, max_steps=max_steps)

    if workers <= 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, jobs))


def dump_results(results: Iterable[dict[str, Any]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in results:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def read_results(path: str | Path) -> list[dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
