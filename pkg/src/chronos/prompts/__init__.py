"""Prompt files. File names (without ``.md``) are the lookup keys."""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from pathlib import Path

PROMPT_NAMES = (
    "extractor",
    "guidance_meta_prompt",
    "agent_guidelines",
    "agent_forced_answer",
    "judge/default",
    "judge/knowledge-update",
    "judge/temporal-reasoning",
    "judge/single-session-preference",
    "judge/abstention",
)


@lru_cache(maxsize=None)
def load_prompt(name: str, directory: str | None = None) -> str:
    """Read ``<name>.md`` from ``directory`` or the bundled prompts."""
    if directory is not None:
        return (Path(directory) / f"{name}.md").read_text(encoding="utf-8").strip()
    return resources.files(__name__).joinpath(f"{name}.md").read_text(encoding="utf-8").strip()
