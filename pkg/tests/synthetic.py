"""Deterministic 40-session synthetic haystack for retrieval tests."""

from __future__ import annotations

import random
from datetime import datetime, timedelta, timezone

from chronos.models import Session

TOPICS = {
    "running": ["I went for a {n}k run around the lake.", "My knees felt fine after the run.",
                "I am training for a half marathon in the fall."],
    "cooking": ["I tried a new {dish} recipe tonight.", "The {dish} needed more salt.",
                "I bought a cast iron pan for cooking."],
    "travel": ["I booked flights to {city} for next month.", "The hotel in {city} looks great.",
               "I need a travel adapter for {city}."],
    "work": ["My manager asked me to lead the {project} project.", "The {project} deadline moved again.",
             "I presented the {project} results to the team."],
    "garden": ["I planted {plant} seeds in the backyard.", "The {plant} seedlings are sprouting.",
               "Slugs ate half of my {plant}."],
    "reading": ["I finished reading {book}.", "{book} had a surprising ending.",
                "I started a book club discussion about {book}."],
}
FILL = {
    "n": ["5", "10", "8"],
    "dish": ["lasagna", "curry", "risotto", "ramen"],
    "city": ["Kyoto", "Oslo", "Lima", "Dublin"],
    "project": ["billing", "search", "onboarding"],
    "plant": ["tomato", "basil", "sunflower"],
    "book": ["Dune", "Middlemarch", "The Overstory"],
}
REPLIES = ["That sounds great.", "Thanks for sharing that with me.", "How did that go?",
           "Let me know if you want suggestions.", "Nice progress!"]


def synthetic_haystack(n_sessions: int = 40, seed: int = 7) -> list[Session]:
    rng = random.Random(seed)
    start = datetime(2023, 1, 2, 9, 0, tzinfo=timezone.utc)
    sessions = []
    for s in range(n_sessions):
        when = start + timedelta(days=rng.randint(0, 360), hours=rng.randint(0, 10))
        topic = rng.choice(sorted(TOPICS))
        messages = []
        for _ in range(rng.randint(3, 6)):
            line = rng.choice(TOPICS[topic])
            line = line.format(**{k: rng.choice(v) for k, v in FILL.items()})
            messages.append(("user", line))
            messages.append(("assistant", rng.choice(REPLIES)))
        sessions.append(Session.from_messages(f"syn{s:02d}", when, messages))
    return sessions
