from datetime import date

import pytest

from chronos.agent import TOOL_SCHEMAS
from chronos.guidance import FALLBACK_BULLET, assemble_system_prompt, generate_guidance, parse_bullets
from chronos.models import RetrievalGuidance
from chronos.providers.base import ChatReply, ProviderFailure
from chronos.providers.mock import KeywordGuidanceChat
from chronos.retrieval import ContextBlock, ContextSection
from conftest import golden_check

BLOCK = ContextBlock(
    (ContextSection("Session 1 (2024-02-14)", ("[turn 0] user: I bought a Fitbit today.",)),),
    "When did I buy my Fitbit?",
    date(2024, 6, 1),
)


class Replying:
    def __init__(self, text):
        self.text = text
        self.calls = 0

    def complete(self, messages, tools=None):
        self.calls += 1
        return ChatReply(self.text)


def test_mock_guidance_fills_slots():
    g = generate_guidance("How many times did I exercise in May?", KeywordGuidanceChat())
    assert 1 <= len(g.bullets) <= 5 and not g.degraded
    joined = " ".join(g.bullets).lower()
    assert "exercise" in joined and "count" in joined and "in may" in joined


def test_camera_lens_guidance_mentions_recency():
    g = generate_guidance("What camera lens did I buy most recently?", KeywordGuidanceChat())
    assert g.bullets[0].startswith("Pay close attention to the following information (current and past)")
    assert "camera lens" in g.bullets[0]
    assert any("most recent" in b for b in g.bullets)


def test_called_once_and_capped_at_five():
    chat = Replying("\n".join(f"- bullet {i}" for i in range(9)))
    g = generate_guidance("q?", chat)
    assert chat.calls == 1 and len(g.bullets) == 5


def test_degraded_on_failure():
    class Down:
        def complete(self, messages, tools=None):
            raise ProviderFailure("down", retryable=False)

    g = generate_guidance("q?", Down())
    assert g.degraded and g.bullets == (FALLBACK_BULLET,)
    assert generate_guidance("q?", Replying("   ")).degraded


def test_empty_question_is_a_precondition_error():
    with pytest.raises(ValueError):
        generate_guidance("", KeywordGuidanceChat())


def test_parse_bullets_variants():
    assert parse_bullets("1. one\n2) two\n* three\nnoise") == ["one", "two", "three"]
    assert parse_bullets("just a sentence") == ["just a sentence"]


def test_section_order_and_golden():
    g = RetrievalGuidance(("first bullet", "second bullet"))
    prompt = assemble_system_prompt(g, TOOL_SCHEMAS, BLOCK)
    positions = [prompt.index(h) for h in
                 ("## Retrieval guidance", "## Reasoning guidelines", "## Tools", "## Retrieved context")]
    assert positions == sorted(positions)
    assert prompt.index("second bullet") < prompt.index("search_turns(")
    assert prompt == assemble_system_prompt(g, TOOL_SCHEMAS, BLOCK)
    golden_check("system_prompt.txt", prompt)


def test_ablated_sections_disappear():
    no_guidance = assemble_system_prompt(None, TOOL_SCHEMAS, BLOCK)
    assert "Retrieval guidance" not in no_guidance and "Pay close attention" not in no_guidance
    no_context = assemble_system_prompt(RetrievalGuidance(("x",)), TOOL_SCHEMAS, None, question_date="2024-06-01")
    assert "## Retrieved context" not in no_context and "2024-06-01" in no_context
