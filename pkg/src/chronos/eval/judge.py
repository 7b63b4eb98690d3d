"""Answer judges: a category-routed LLM judge and an offline string-match judge."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from ..prompts import load_prompt
from ..providers.base import ChatProvider, ProviderFailure, tokenize, with_retry
from .benchmark import BenchmarkQuestion

logger = logging.getLogger(__name__)

_REFUSAL = re.compile(
    r"\b(?:i don'?t know|i do not know|not (?:mentioned|available|specified|provided|enough information)"
    r"|no (?:record|information|mention)|never mentioned|did not mention|didn'?t mention"
    r"|cannot (?:determine|find|tell)|can'?t (?:determine|find|tell)|unable to (?:determine|find))\b",
    re.IGNORECASE,
)
_YES = re.compile(r"^\W*yes\b", re.IGNORECASE)


@dataclass(frozen=True)
class Judgment:
    correct: bool | None
    raw: str
    available: bool = True


def is_refusal(text: str) -> bool:
    return bool(_REFUSAL.search(text))


def judge_prompt_name(q: BenchmarkQuestion) -> str:
    if q.abstention:
        return "judge/abstention"
    if q.question_type in ("knowledge-update", "temporal-reasoning", "single-session-preference"):
        return f"judge/{q.question_type}"
    return "judge/default"


def contains_reference(hypothesis: str, reference: str) -> bool:
    """Case-folded, punctuation-stripped containment on token boundaries."""
    ref = tokenize(reference)
    hyp = tokenize(hypothesis)
    if not ref:
        return False
    n = len(ref)
    return any(hyp[i:i + n] == ref for i in range(len(hyp) - n + 1))


class StringMatchJudge:
    """Offline judge. Abstention questions pass on a refusal; others need containment."""

    def judge(self, hypothesis: str, q: BenchmarkQuestion) -> Judgment:
        if q.abstention:
            ok = is_refusal(hypothesis)
            return Judgment(ok, "refusal" if ok else "no refusal")
        ok = contains_reference(hypothesis, q.answer)
        return Judgment(ok, "contains reference" if ok else "reference not found")


class LLMJudge:
    def __init__(self, chat: ChatProvider):
        self.chat = chat

    def judge(self, hypothesis: str, q: BenchmarkQuestion) -> Judgment:
        prompt = load_prompt(judge_prompt_name(q)).format(
            question=q.question, answer=q.answer, hypothesis=hypothesis
        )
        try:
            reply = with_retry(lambda: self.chat.complete([{"role": "user", "content": prompt}]), what="judge")
        except ProviderFailure as exc:
            logger.warning("judge unavailable for %s: %s", q.question_id, exc)
            return Judgment(None, str(exc), available=False)
        raw = reply.content.strip()
        return Judgment(bool(_YES.match(raw)), raw)


def make_judge(chat: ChatProvider | None):
    return LLMJudge(chat) if chat is not None else StringMatchJudge()


def judge(hypothesis: str, q: BenchmarkQuestion, judge_provider: ChatProvider | None = None) -> Judgment:
    return make_judge(judge_provider).judge(hypothesis, q)
