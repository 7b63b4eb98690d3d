"""Stratified subsampling by question category."""

from __future__ import annotations

import random
from typing import Sequence

from .benchmark import CATEGORY_ORDER, BenchmarkQuestion

DEFAULT_SEED = 20240615


def allocate(counts: dict[str, int], n: int) -> dict[str, int]:
    """Largest-remainder allocation of ``n`` slots proportional to ``counts``.

    Remainder ties go to the category listed first in the report order.
    """
    total = sum(counts.values())
    if not 0 <= n <= total:
        raise ValueError(f"cannot sample {n} of {total} questions")
    quotas = {c: n * counts.get(c, 0) / total for c in CATEGORY_ORDER}
    alloc = {c: int(quotas[c]) for c in CATEGORY_ORDER}
    leftover = n - sum(alloc.values())
    by_remainder = sorted(CATEGORY_ORDER, key=lambda c: (-(quotas[c] - alloc[c]), CATEGORY_ORDER.index(c)))
    for c in by_remainder[:leftover]:
        alloc[c] += 1
    return alloc


def stratified_sample(
    questions: Sequence[BenchmarkQuestion], n: int, seed: int = DEFAULT_SEED
) -> list[BenchmarkQuestion]:
    """Pick ``n`` questions with category shares matching the full set; keeps input order."""
    if n >= len(questions):
        return list(questions)
    counts = {c: sum(1 for q in questions if q.category == c) for c in CATEGORY_ORDER}
    alloc = allocate(counts, n)
    rng = random.Random(seed)
    chosen: set[str] = set()
    for code in CATEGORY_ORDER:
        ids = sorted(q.question_id for q in questions if q.category == code)
        chosen.update(rng.sample(ids, alloc[code]))
    return [q for q in questions if q.question_id in chosen]


def parse_sample_spec(spec: str) -> int:
    """``stratified:116`` -> 116."""
    kind, _, value = spec.partition(":")
    if kind != "stratified" or not value.isdigit() or int(value) <= 0:
        raise ValueError(f"sample spec must look like 'stratified:<n>', got {spec!r}")
    return int(value)
