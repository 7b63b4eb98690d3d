import json
import random

import pytest
from hypothesis import given, strategies as st

from chronos.eval import (
    CATEGORY_ORDER,
    EXPECTED_COUNTS,
    AblationConfig,
    BenchmarkFormatError,
    StringMatchJudge,
    aggregate_report,
    allocate,
    category_counts,
    format_report,
    load_benchmark,
    run_question,
    stratified_sample,
)
from chronos.eval.benchmark import parse_bench_datetime, parse_benchmark
from chronos.eval.datasets import excluded_ids, resolve_bench
from chronos.eval.judge import LLMJudge, contains_reference, judge_prompt_name
from chronos.providers.base import ChatReply, ProviderFailure


def _record(qid="q1", qtype="single-session-user", answer="Biscuit"):
    return {
        "question_id": qid,
        "question_type": qtype,
        "question": "What is my dog's name?",
        "answer": answer,
        "question_date": "2024/06/15 (Sat) 12:00",
        "haystack_session_ids": ["s1"],
        "haystack_dates": ["2024/06/05 (Wed) 19:00"],
        "haystack_sessions": [[{"role": "user", "content": "My dog Biscuit learned to fetch.", "has_answer": True}]],
    }


def test_load_and_histogram(mini_questions):
    assert len(mini_questions) == 12
    assert category_counts(mini_questions) == {c: 2 for c in CATEGORY_ORDER}
    q = mini_questions[0]
    assert q.category == "KU" and len(q.haystack) == 18 and q.evidence_turns


def test_bench_dates():
    assert parse_bench_datetime("2023/05/30 (Tue) 23:40").isoformat() == "2023-05-30T23:40:00+00:00"


def test_parse_errors_name_the_record(tmp_path):
    with pytest.raises(BenchmarkFormatError, match="record 1"):
        parse_benchmark([_record(), {"question_id": "bad"}])
    with pytest.raises(BenchmarkFormatError, match="record 0"):
        parse_benchmark([dict(_record(), haystack_dates=[])])
    with pytest.raises(BenchmarkFormatError):
        parse_benchmark([])
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(BenchmarkFormatError):
        load_benchmark(empty)


def test_mock_judge_rules():
    q = parse_benchmark([_record()])[0]
    j = StringMatchJudge()
    assert j.judge("Biscuit", q).correct
    assert j.judge("Your dog is called biscuit!", q).correct
    assert not j.judge("I don't know", q).correct
    abstain = parse_benchmark([_record(qid="q2_abs", answer="You never mentioned a cat.")])[0]
    assert j.judge("I don't know, you never mentioned a cat.", abstain).correct
    assert not j.judge("Your cat is Tom.", abstain).correct


def test_containment_respects_token_boundaries():
    assert contains_reference("You exercised 3 times", "3")
    assert not contains_reference("You exercised 13 times", "3")


def test_llm_judge_routing_and_unavailable():
    qs = parse_benchmark([_record(), _record("k", "knowledge-update"), _record("a_abs")])
    assert [judge_prompt_name(q) for q in qs] == ["judge/default", "judge/knowledge-update", "judge/abstention"]

    class Yes:
        def complete(self, messages, tools=None):
            assert "Biscuit" in messages[0]["content"]
            return ChatReply("Yes.")

    assert LLMJudge(Yes()).judge("Biscuit", qs[0]).correct

    class Down:
        def complete(self, messages, tools=None):
            raise ProviderFailure("x", retryable=False)

    v = LLMJudge(Down()).judge("Biscuit", qs[0])
    assert v.correct is None and not v.available


def test_ablation_config():
    assert AblationConfig.parse("turns_only,no_rerank").label == "no_rerank+turns_only"
    assert AblationConfig.parse("full").label == "full"
    with pytest.raises(ValueError):
        AblationConfig.parse("grep_only,vector_only")
    with pytest.raises(ValueError):
        AblationConfig.parse("no_such_flag")
    cfg = AblationConfig.parse("grep_only,turns_only").agent_config()
    assert cfg.tools == ("grep_turns",)


def test_allocation_for_116():
    alloc = allocate(EXPECTED_COUNTS, 116)
    assert alloc == {"KU": 18, "MS": 31, "SSA": 13, "SSP": 7, "SSU": 16, "TR": 31}


@given(st.integers(min_value=0, max_value=500))
def test_allocation_sums_and_stays_within_one_of_quota(n):
    alloc = allocate(EXPECTED_COUNTS, n)
    assert sum(alloc.values()) == n
    for c, v in alloc.items():
        assert abs(v - n * EXPECTED_COUNTS[c] / 500) < 1


def test_stratified_sample_on_synthetic_500():
    recs = []
    for code, qtype in zip(CATEGORY_ORDER, ["knowledge-update", "multi-session", "single-session-assistant",
                                            "single-session-preference", "single-session-user",
                                            "temporal-reasoning"]):
        recs += [_record(f"{code}{i:03d}", qtype) for i in range(EXPECTED_COUNTS[code])]
    random.Random(1).shuffle(recs)
    qs = parse_benchmark(recs)
    assert category_counts(qs) == EXPECTED_COUNTS
    s1 = stratified_sample(qs, 116, seed=9)
    assert category_counts(s1) == allocate(EXPECTED_COUNTS, 116)
    assert [q.question_id for q in s1] == [q.question_id for q in stratified_sample(qs, 116, seed=9)]
    assert [q.question_id for q in s1] != [q.question_id for q in stratified_sample(qs, 116, seed=10)]


def test_report_arithmetic():
    rows = [
        {"category": "KU", "correct": True, "ablation": "full", "error_category": None},
        {"category": "KU", "correct": False, "ablation": "full", "error_category": "temporal"},
        {"category": "TR", "correct": True, "ablation": "full", "error_category": None},
        {"category": "MS", "correct": False, "ablation": "full", "error_category": "counting_arithmetic"},
        {"category": "MS", "correct": None, "judge_available": False, "ablation": "full"},
    ]
    rep = aggregate_report(rows)["runs"]["full"]
    assert rep["overall"] == {"correct": 2, "total": 4, "accuracy": 50.0}
    assert rep["categories"]["KU"]["accuracy"] == 50.0 and rep["categories"]["SSA"]["accuracy"] is None
    assert sum(c["total"] for c in rep["categories"].values()) == rep["overall"]["total"]
    assert rep["unjudged"] == 1 and rep["errors"]["temporal"] == 1
    text = format_report(aggregate_report(rows))
    header = text.splitlines()[1].split()
    assert header[1:7] == list(CATEGORY_ORDER)
    with pytest.raises(ValueError):
        aggregate_report([])


def test_ablation_deltas():
    rows = [{"category": "KU", "correct": True, "ablation": "full"},
            {"category": "KU", "correct": False, "ablation": "turns_only", "error_category": "temporal"}]
    rep = aggregate_report(rows)
    assert rep["deltas"]["turns_only"]["KU"] == -100.0


def test_run_question_records_failures(mini_questions, mini_providers):
    class Down:
        def complete(self, messages, tools=None):
            raise ProviderFailure("boom", retryable=False)

    mini_providers.agent = Down()
    rec = run_question(mini_questions[0], AblationConfig(), mini_providers)
    assert rec["failed"] and rec["correct"] is False and rec["error"]
    json.dumps(rec)


def test_exclusion_list_and_bench_resolution(monkeypatch, tmp_path):
    assert excluded_ids() == ["6d550036", "75f70248"]
    assert resolve_bench("mini").name == "questions.json"
    monkeypatch.setenv("CHRONOS_DATA_DIR", str(tmp_path))
    with pytest.raises(FileNotFoundError):
        resolve_bench("longmemeval_s")
    (tmp_path / "longmemeval_s.json").write_text("[]")
    assert resolve_bench("longmemeval_s") == tmp_path / "longmemeval_s.json"
