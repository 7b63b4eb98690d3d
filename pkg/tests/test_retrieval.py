from datetime import date

import pytest

from chronos.models import MemoryQuery
from chronos.providers.base import ProviderFailure
from chronos.providers.mock import HashEmbedder, LexicalReranker
from chronos.retrieval import rerank_candidates, run_initial_retrieval
from chronos.store import CalendarStore, turn_id
from conftest import golden_check
from synthetic import synthetic_haystack

QUERY = MemoryQuery("How far did I run around the lake before the half marathon?", date(2024, 1, 15))


@pytest.fixture(scope="module")
def synthetic_store():
    return CalendarStore.build(synthetic_haystack(), [], HashEmbedder(64))


def test_rerank_singleton_and_identity():
    assert [i for i, _ in rerank_candidates("q", [("a", "x")], LexicalReranker()).ranked] == ["a"]
    cands = [(f"id{i}", f"doc {i} about bread") for i in range(10)] + [("match", QUERY.question)]
    out = rerank_candidates(QUERY.question, cands, LexicalReranker())
    assert out.ranked[0][0] == "match" and not out.fallback


def test_rerank_permutation_of_100():
    cands = [(f"id{i:03d}", f"word{i % 7} word{i % 3}") for i in range(100)]
    out = rerank_candidates("word1 word2", cands, LexicalReranker()).ranked
    assert sorted(i for i, _ in out) == sorted(i for i, _ in cands)


def test_rerank_failure_falls_back_to_dense_order():
    class Down:
        def rerank(self, q, docs):
            raise ProviderFailure("503")

    cands = [("b", "x"), ("a", "y")]
    out = rerank_candidates("q", cands, Down(), sleep=lambda s: None)
    assert out.fallback and [i for i, _ in out.ranked] == ["b", "a"]


def test_pipeline_invariants(synthetic_store):
    snap = synthetic_store.snapshot
    res = run_initial_retrieval(QUERY, snap, HashEmbedder(64), LexicalReranker())
    dense = [i for i, _ in res.dense]
    reranked = [i for i, _ in res.reranked]
    assert len(dense) <= 100 and sorted(reranked) == sorted(dense)
    assert len(res.seeds) <= 15 and set(res.seeds) <= set(reranked) and res.seeds == reranked[:15]
    for rid in res.included:
        if rid in res.seeds:
            continue
        t = snap.turns.get(rid).payload
        assert any(
            turn_id(t.session_id, t.turn_index + d) in res.seeds for d in (-1, 1)
        ), f"{rid} is not adjacent to any seed"
    assert len(res.included) == len(set(res.included))
    dates = [s.session_header.split("(")[1].rstrip(")") for s in res.block.sections]
    assert dates == sorted(dates)


def test_no_rerank_keeps_dense_order(synthetic_store):
    res = run_initial_retrieval(QUERY, synthetic_store.snapshot, HashEmbedder(64), LexicalReranker(), use_rerank=False)
    assert res.reranked == res.dense


def test_context_block_golden_and_stable(synthetic_store):
    snap = synthetic_store.snapshot
    first = run_initial_retrieval(QUERY, snap, HashEmbedder(64), LexicalReranker()).block.render()
    again = run_initial_retrieval(QUERY, snap, HashEmbedder(64), LexicalReranker()).block.render()
    assert first == again
    assert first.endswith("Question: " + QUERY.question + "\nQuestion date: 2024-01-15\n")
    golden_check("context_block.txt", first)


def test_empty_store_gives_question_only():
    store = CalendarStore(dimension=8)
    block = run_initial_retrieval(QUERY, store.snapshot, HashEmbedder(8), LexicalReranker()).block
    assert block.sections == () and block.render().startswith("Question:")


def test_block_size_and_headers(synthetic_store):
    snap = synthetic_store.snapshot
    res = run_initial_retrieval(QUERY, snap, HashEmbedder(64), LexicalReranker())
    assert len(res.included) <= 15 + 2 * 15
    sessions = {s.session_id: s for s in synthetic_haystack()}
    rendered = 0
    for section in res.block.sections:
        number, day = section.session_header.removeprefix("Session ").rstrip(")").split(" (")
        sid = next(sid for sid in sessions if snap.session_number(sid) == int(number))
        assert sessions[sid].date.isoformat() == day
        rendered += len(section.entries)
    assert rendered == len(res.included)
