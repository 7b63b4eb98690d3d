"""ReAct loop over the turn and event calendars."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Any, Mapping

from .guidance import assemble_system_prompt, generate_guidance
from .models import (
    AgentTrace,
    ConversationTurn,
    DatetimeRange,
    MemoryQuery,
    TemporalEvent,
    TraceStep,
    parse_date,
)
from .prompts import load_prompt
from .providers.base import ChatProvider, Embedder, ProviderFailure, Reranker, with_retry
from .retrieval import DENSE_POOL, rerank_candidates, run_initial_retrieval
from .store import CalendarRecord, CalendarSnapshot, CalendarStore

logger = logging.getLogger(__name__)

MAX_STEPS = 10
GREP_CAP = 50
MAX_RECORD_CHARS = 2000
TRUNCATION_MARKER = " ...[truncated]"

SEARCH_TOOLS = ("search_turns", "search_events")
GREP_TOOLS = ("grep_turns", "grep_events")
TOOL_NAMES = SEARCH_TOOLS + GREP_TOOLS
EVENT_TOOLS = ("search_events", "grep_events")

_DATE_PARAMS = {
    "date_from": {"type": "string", "description": "Earliest date to include (YYYY-MM-DD)."},
    "date_to": {"type": "string", "description": "Latest date to include (YYYY-MM-DD)."},
}

TOOL_SCHEMAS: tuple[dict[str, Any], ...] = (
    {
        "name": "search_turns",
        "description": "Semantic search over raw conversation turns. Results are reranked against the user's question.",
        "parameters": {
            "type": "object",
            "properties": {
                "query": {"type": "string", "description": "What to look for."},
                "k": {"type": "integer", "description": "How many results to return."},
                **_DATE_PARAMS,
            },
            "required": ["query", "k"],
        },
    },
    {
        "name": "search_events",
        "description": "Semantic search over extracted events, each with a resolved date range.",
        "parameters": {
            "type": "object",
            "properties": {
                "query": {"type": "string", "description": "What to look for."},
                "k": {"type": "integer", "description": "How many results to return."},
                **_DATE_PARAMS,
            },
            "required": ["query", "k"],
        },
    },
    {
        "name": "grep_turns",
        "description": "Case-insensitive exact substring match over conversation turns.",
        "parameters": {
            "type": "object",
            "properties": {"pattern": {"type": "string", "description": "Text to match."}, **_DATE_PARAMS},
            "required": ["pattern"],
        },
    },
    {
        "name": "grep_events",
        "description": "Case-insensitive exact substring match over events and their aliases.",
        "parameters": {
            "type": "object",
            "properties": {"pattern": {"type": "string", "description": "Text to match."}, **_DATE_PARAMS},
            "required": ["pattern"],
        },
    },
)


class ToolArgumentError(ValueError):
    pass


@dataclass(frozen=True)
class ToolCall:
    tool: str
    query_or_pattern: str
    k: int | None = None
    date_from: date | None = None
    date_to: date | None = None

    def __post_init__(self) -> None:
        if self.tool not in TOOL_NAMES:
            raise ToolArgumentError(f"unknown tool {self.tool!r}")
        if not isinstance(self.query_or_pattern, str) or not self.query_or_pattern.strip():
            raise ToolArgumentError("query/pattern must be a non-empty string")
        if self.tool in SEARCH_TOOLS:
            if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k <= 0:
                raise ToolArgumentError(f"{self.tool} needs a positive integer k")
        if self.date_from and self.date_to and self.date_from > self.date_to:
            raise ToolArgumentError("date_from is after date_to")

    @classmethod
    def from_arguments(cls, name: str, args: Mapping[str, Any]) -> ToolCall:
        """Validate raw model-supplied arguments."""
        if name not in TOOL_NAMES:
            raise ToolArgumentError(f"unknown tool {name!r}; available: {', '.join(TOOL_NAMES)}")
        if not isinstance(args, Mapping):
            raise ToolArgumentError("arguments must be an object")
        text = args.get("query" if name in SEARCH_TOOLS else "pattern")
        k = args.get("k")
        if name in SEARCH_TOOLS and isinstance(k, str) and k.strip().isdigit():
            k = int(k)
        bounds = {}
        for key in ("date_from", "date_to"):
            value = args.get(key)
            if value in (None, ""):
                bounds[key] = None
                continue
            try:
                bounds[key] = parse_date(str(value)[:10])
            except ValueError as exc:
                raise ToolArgumentError(f"{key} must be an ISO date, got {value!r}") from exc
        return cls(name, text, k if name in SEARCH_TOOLS else None, **bounds)

    @property
    def time_range(self) -> DatetimeRange | None:
        if self.date_from is None and self.date_to is None:
            return None
        return DatetimeRange.for_days(self.date_from or date.min, self.date_to or date.max)


def _clip(text: str) -> str:
    if len(text) <= MAX_RECORD_CHARS:
        return text
    return text[: MAX_RECORD_CHARS - len(TRUNCATION_MARKER)] + TRUNCATION_MARKER


def render_record(record: CalendarRecord) -> str:
    payload = record.payload
    if isinstance(payload, ConversationTurn):
        line = f"[{record.id}] {payload.timestamp.date().isoformat()} {payload.role}: {payload.text}"
    else:
        ev: TemporalEvent = payload
        aliases = "; ".join(ev.aliases)
        line = f"[{record.id}] {ev.range.describe()} | {ev.svo} | {ev.surface_text}"
        if aliases:
            line += f" | aliases: {aliases}"
    return _clip(line)


@dataclass
class ToolResult:
    text: str
    record_ids: list[str]
    store_query: dict[str, Any]


class ToolExecutor:
    """Runs validated tool calls against one snapshot for one question."""

    def __init__(
        self,
        query: MemoryQuery,
        snapshot: CalendarSnapshot,
        embedder: Embedder,
        reranker: Reranker | None,
        *,
        use_rerank: bool = True,
        date_filter: bool = True,
        grep_cap: int = GREP_CAP,
    ):
        self.query = query
        self.snapshot = snapshot
        self.embedder = embedder
        self.reranker = reranker
        self.use_rerank = use_rerank
        self.date_filter = date_filter
        self.grep_cap = grep_cap
        self.store_queries: list[dict[str, Any]] = []

    def execute(self, call: ToolCall) -> ToolResult:
        index = self.snapshot.turns if call.tool.endswith("turns") else self.snapshot.events
        time_range = call.time_range if self.date_filter else None
        logged = {
            "tool": call.tool,
            "text": call.query_or_pattern,
            "time_range": time_range.to_dict() if time_range else None,
        }
        if call.tool in SEARCH_TOOLS:
            logged["pool"] = DENSE_POOL
            vec = with_retry(lambda: self.embedder.embed([call.query_or_pattern]), what="embed tool query")[0]
            ranked = index.vector_search(vec, DENSE_POOL, time_range) if len(index) else []
            if self.use_rerank and self.reranker is not None and ranked:
                # rerank against the user's question, not the agent's rewritten query
                ranked = rerank_candidates(
                    self.query.question, [(i, index.get(i).text) for i, _ in ranked], self.reranker
                ).ranked
            ids = [i for i, _ in ranked[: call.k]]
        else:
            logged["limit"] = self.grep_cap
            ids = [i for i, _ in index.grep(call.query_or_pattern, time_range, self.grep_cap)] if len(index) else []
        self.store_queries.append(logged)
        if not ids:
            return ToolResult("No results.", [], logged)
        body = "\n".join(render_record(index.get(i)) for i in ids)
        return ToolResult(body, ids, logged)


def exec_tool(
    call: ToolCall,
    query: MemoryQuery,
    store: CalendarStore | CalendarSnapshot,
    embedder: Embedder,
    reranker: Reranker | None,
    **options: Any,
) -> str:
    snapshot = store.snapshot if isinstance(store, CalendarStore) else store
    return ToolExecutor(query, snapshot, embedder, reranker, **options).execute(call).text


@dataclass(frozen=True)
class AgentConfig:
    max_steps: int = MAX_STEPS
    initial_retrieval: bool = True
    dynamic_prompting: bool = True
    rerank: bool = True
    date_filter: bool = True
    tools: tuple[str, ...] = TOOL_NAMES

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        unknown = set(self.tools) - set(TOOL_NAMES)
        if unknown:
            raise ValueError(f"unknown tools {sorted(unknown)}")


@dataclass
class AgentProviders:
    """The subset of providers an agent run needs."""

    agent: ChatProvider
    embedder: Embedder
    reranker: Reranker | None = None
    guidance: ChatProvider | None = None


@dataclass
class _Run:
    steps: list[TraceStep] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def add(self, kind: str, payload: Any) -> None:
        self.steps.append(TraceStep(kind, payload))  # type: ignore[arg-type]

    def finish(self, answer: str) -> tuple[str, AgentTrace]:
        self.add("answer", answer)
        return answer, AgentTrace(tuple(self.steps), answer, self.metadata)


def run_agent(
    query: MemoryQuery,
    store: CalendarStore | CalendarSnapshot,
    providers: Any,
    config: AgentConfig = AgentConfig(),
) -> tuple[str, AgentTrace]:
    """Answer ``query`` from the calendars; always returns a well-formed trace.

    ``providers`` needs ``agent``, ``embedder`` and ``reranker`` attributes,
    plus ``guidance`` unless dynamic prompting is off.
    """
    snapshot = store.snapshot if isinstance(store, CalendarStore) else store
    reranker = providers.reranker if config.rerank else None
    run = _Run(metadata={"failed": False, "forced_answer": False, "tool_rounds": 0})
    tools = [t for t in TOOL_SCHEMAS if t["name"] in config.tools]

    try:
        guidance = None
        if config.dynamic_prompting:
            guidance = generate_guidance(query.question, providers.guidance)
            run.metadata["guidance"] = guidance.to_dict()
        context = None
        if config.initial_retrieval:
            retrieval = run_initial_retrieval(
                query, snapshot, providers.embedder, reranker, use_rerank=config.rerank
            )
            context = retrieval.block
            run.metadata["retrieval"] = retrieval.summary()
        system = assemble_system_prompt(
            guidance, tools, context, question_date=query.question_date.isoformat()
        )
    except ProviderFailure as exc:
        logger.error("setup failed for %r: %s", query.question, exc)
        run.metadata.update(failed=True, error=str(exc))
        return run.finish("")

    executor = ToolExecutor(
        query, snapshot, providers.embedder, reranker, use_rerank=config.rerank, date_filter=config.date_filter
    )
    messages: list[dict[str, Any]] = [
        {"role": "system", "content": system},
        {"role": "user", "content": query.question},
    ]
    offered = {t["name"] for t in tools}

    try:
        for _ in range(config.max_steps):
            reply = with_retry(lambda: providers.agent.complete(messages, tools), what="agent step")
            if not reply.tool_calls:
                run.metadata["store_queries"] = executor.store_queries
                return run.finish(reply.content.strip())
            run.metadata["tool_rounds"] += 1
            if reply.content.strip():
                run.add("thought", reply.content.strip())
            messages.append(reply.as_message())
            for request in reply.tool_calls:
                run.add("tool_call", {"id": request.id, "name": request.name, "arguments": request.arguments})
                observation: dict[str, Any] = {"id": request.id, "name": request.name}
                try:
                    if request.name not in offered:
                        raise ToolArgumentError(f"tool {request.name!r} is not available")
                    result = executor.execute(ToolCall.from_arguments(request.name, request.arguments))
                    observation.update(text=result.text, record_ids=result.record_ids,
                                       store_query=result.store_query)
                except ToolArgumentError as exc:
                    observation.update(text=f"Error: {exc}", record_ids=[], error=True)
                run.add("observation", observation)
                messages.append(
                    {"role": "tool", "tool_call_id": request.id, "name": request.name, "content": observation["text"]}
                )
        # budget spent: one last turn without tools
        run.metadata["forced_answer"] = True
        messages.append({"role": "system", "content": load_prompt("agent_forced_answer")})
        reply = with_retry(lambda: providers.agent.complete(messages, None), what="forced answer")
        run.metadata["store_queries"] = executor.store_queries
        return run.finish(reply.content.strip())
    except ProviderFailure as exc:
        logger.error("agent failed for %r: %s", query.question, exc)
        run.metadata.update(failed=True, error=str(exc), store_queries=executor.store_queries)
        return run.finish("")
