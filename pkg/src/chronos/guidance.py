"""Per-question retrieval guidance and system prompt assembly."""

from __future__ import annotations

import logging
import re
from typing import Any, Mapping, Sequence

from .models import MAX_GUIDANCE_BULLETS, RetrievalGuidance
from .prompts import load_prompt
from .providers.base import ChatProvider, ProviderFailure, with_retry
from .retrieval import ContextBlock

logger = logging.getLogger(__name__)

FALLBACK_BULLET = "Pay close attention to information relevant to the question, current and past."

_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$")


def parse_bullets(text: str) -> list[str]:
    """Pull bullet lines out of a model reply; bare text counts as one bullet."""
    bullets = [m.group(1) for m in map(_BULLET.match, text.splitlines()) if m]
    if not bullets and text.strip():
        bullets = [" ".join(text.split())]
    return bullets[:MAX_GUIDANCE_BULLETS]


def generate_guidance(
    question: str,
    chat: ChatProvider,
    *,
    meta_prompt: str | None = None,
    attempts: int = 3,
    **retry: Any,
) -> RetrievalGuidance:
    """Ask the guidance model for 1-5 bullets; degrade to one generic bullet on failure."""
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    messages = [
        {"role": "system", "content": meta_prompt or load_prompt("guidance_meta_prompt")},
        {"role": "user", "content": f"Question: {question}"},
    ]
    try:
        reply = with_retry(lambda: chat.complete(messages), attempts=attempts, what="guidance", **retry)
        bullets = parse_bullets(reply.content)
    except ProviderFailure as exc:
        logger.warning("guidance generation failed, using fallback: %s", exc)
        bullets = []
    if not bullets:
        return RetrievalGuidance((FALLBACK_BULLET,), degraded=True)
    return RetrievalGuidance(tuple(bullets))


def render_tool_descriptions(tools: Sequence[Mapping[str, Any]]) -> str:
    lines = []
    for tool in tools:
        props = tool.get("parameters", {}).get("properties", {})
        required = set(tool.get("parameters", {}).get("required", ()))
        params = ", ".join(
            f"{name}: {spec.get('type', 'any')}{'' if name in required else '?'}" for name, spec in props.items()
        )
        lines.append(f"- {tool['name']}({params}): {tool.get('description', '')}")
    return "\n".join(lines)


def assemble_system_prompt(
    guidance: RetrievalGuidance | None,
    tools: Sequence[Mapping[str, Any]],
    context: ContextBlock | None,
    *,
    guidelines: str | None = None,
    question_date: str | None = None,
) -> str:
    """Fixed order: guidance, reasoning guidelines, tools, retrieved context.

    Passing ``None`` for guidance or context drops that section entirely.
    When there is no context block the question date gets its own section so
    the agent still knows "today".
    """
    sections = ["You answer questions about the user's past conversations using their memory calendars."]
    if guidance is not None:
        sections.append("## Retrieval guidance\n" + guidance.render())
    sections.append("## Reasoning guidelines\n" + (guidelines or load_prompt("agent_guidelines")))
    if tools:
        sections.append("## Tools\n" + render_tool_descriptions(tools))
    if context is not None:
        sections.append("## Retrieved context\n" + context.render().rstrip("\n"))
    elif question_date:
        sections.append(f"## Question date\n{question_date}")
    return "\n\n".join(sections) + "\n"
