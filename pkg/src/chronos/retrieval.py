"""Initial retrieval: dense top-100, rerank, top-15 seeds, ±1 expansion, date-grouped block."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Sequence

from .models import ConversationTurn, MemoryQuery
from .providers.base import Embedder, ProviderFailure, Reranker, check_permutation, with_retry
from .store import CalendarSnapshot, turn_id

logger = logging.getLogger(__name__)

DENSE_POOL = 100
SEED_COUNT = 15
CONTEXT_WINDOW = 1


@dataclass(frozen=True)
class ContextSection:
    session_header: str
    entries: tuple[str, ...]


@dataclass(frozen=True)
class ContextBlock:
    sections: tuple[ContextSection, ...]
    question: str
    question_date: date

    def render(self) -> str:
        parts = []
        for section in self.sections:
            parts.append("\n".join([section.session_header, *section.entries]))
        parts.append(f"Question: {self.question}\nQuestion date: {self.question_date.isoformat()}")
        return "\n\n".join(parts) + "\n"


@dataclass(frozen=True)
class RerankResult:
    ranked: list[tuple[str, float]]
    fallback: bool = False


def rerank_candidates(
    question: str,
    candidates: Sequence[tuple[str, str]],
    reranker: Reranker,
    *,
    attempts: int = 3,
    sleep=None,
) -> RerankResult:
    """Rescore ``(id, text)`` candidates against ``question``.

    On reranker failure the original order is kept (scores become rank-based
    placeholders) and ``fallback`` is set.
    """
    if not candidates:
        return RerankResult([])
    kwargs = {"sleep": sleep} if sleep is not None else {}
    try:
        scored = with_retry(
            lambda: reranker.rerank(question, [text for _, text in candidates]),
            attempts=attempts,
            what="rerank",
            **kwargs,
        )
        check_permutation(scored, len(candidates))
    except ProviderFailure as exc:
        logger.warning("rerank failed, keeping dense order: %s", exc)
        n = len(candidates)
        return RerankResult([(cid, float(n - i)) for i, (cid, _) in enumerate(candidates)], fallback=True)
    return RerankResult([(candidates[i][0], float(score)) for i, score in scored])


@dataclass
class RetrievalResult:
    block: ContextBlock
    dense: list[tuple[str, float]] = field(default_factory=list)
    reranked: list[tuple[str, float]] = field(default_factory=list)
    seeds: list[str] = field(default_factory=list)
    included: list[str] = field(default_factory=list)
    rerank_fallback: bool = False

    def summary(self) -> dict:
        return {
            "dense_ids": [i for i, _ in self.dense],
            "reranked_ids": [i for i, _ in self.reranked],
            "seed_ids": list(self.seeds),
            "included_ids": list(self.included),
            "rerank_fallback": self.rerank_fallback,
        }


def render_turn(turn: ConversationTurn) -> str:
    return f"[turn {turn.turn_index}] {turn.role}: {turn.text}"


def build_context_block(
    snapshot: CalendarSnapshot, turn_ids: Sequence[str], query: MemoryQuery
) -> ContextBlock:
    """Group turns by session (chronological) and order them inside each session."""
    by_session: dict[str, list[ConversationTurn]] = {}
    for rid in dict.fromkeys(turn_ids):
        turn: ConversationTurn = snapshot.turns.get(rid).payload  # type: ignore[assignment]
        by_session.setdefault(turn.session_id, []).append(turn)
    order = sorted(by_session, key=lambda s: snapshot.session_number(s))
    sections = []
    for sid in order:
        turns = sorted(by_session[sid], key=lambda t: t.turn_index)
        header = f"Session {snapshot.session_number(sid)} ({snapshot.session_dates[sid].isoformat()})"
        sections.append(ContextSection(header, tuple(render_turn(t) for t in turns)))
    return ContextBlock(tuple(sections), query.question, query.question_date)


def run_initial_retrieval(
    query: MemoryQuery,
    snapshot: CalendarSnapshot,
    embedder: Embedder,
    reranker: Reranker | None,
    *,
    dense_k: int = DENSE_POOL,
    seeds: int = SEED_COUNT,
    window: int = CONTEXT_WINDOW,
    use_rerank: bool = True,
) -> RetrievalResult:
    turns = snapshot.turns
    if not len(turns):
        return RetrievalResult(ContextBlock((), query.question, query.question_date))
    qvec = with_retry(lambda: embedder.embed([query.question]), what="embed question")[0]
    dense = turns.vector_search(qvec, dense_k)
    fallback = False
    if use_rerank and reranker is not None:
        result = rerank_candidates(query.question, [(i, turns.get(i).text) for i, _ in dense], reranker)
        reranked, fallback = result.ranked, result.fallback
    else:
        reranked = list(dense)
    seed_ids = [i for i, _ in reranked[:seeds]]

    included: list[str] = []
    seen: set[str] = set()
    for rid in seed_ids:
        turn: ConversationTurn = turns.get(rid).payload  # type: ignore[assignment]
        for offset in range(-window, window + 1):
            nid = turn_id(turn.session_id, turn.turn_index + offset)
            if nid in turns and nid not in seen:
                seen.add(nid)
                included.append(nid)
    block = build_context_block(snapshot, included, query)
    return RetrievalResult(block, dense, reranked, seed_ids, included, fallback)


def initial_retrieve(
    query: MemoryQuery,
    snapshot: CalendarSnapshot,
    embedder: Embedder,
    reranker: Reranker | None,
    **options,
) -> ContextBlock:
    return run_initial_retrieval(query, snapshot, embedder, reranker, **options).block
