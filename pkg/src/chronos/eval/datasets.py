"""Locating benchmark files and the bundled mini haystack."""

from __future__ import annotations

import json
import os
from importlib import resources
from pathlib import Path
from typing import Any

from ..providers.config import MockScripts

DATA_DIR_ENV = "CHRONOS_DATA_DIR"


def _data(*parts: str) -> Path:
    return Path(str(resources.files("chronos").joinpath("data", *parts)))


def mini_path() -> Path:
    return _data("mini", "questions.json")


def _load(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def mini_scripts(seed: int = 0) -> MockScripts:
    return MockScripts(
        agent=_load(_data("mini", "agent_script.json")),
        extractor=_load(_data("mini", "extractor_script.json")),
        seed=seed,
    )


def excluded_ids() -> list[str]:
    return [q["question_id"] for q in _load(_data("excluded_questions.json"))["questions"]]


def resolve_bench(name: str) -> Path:
    """``mini``, ``longmemeval_s`` (looked up under $CHRONOS_DATA_DIR or the cwd) or a path."""
    if name == "mini":
        return mini_path()
    if name in ("longmemeval_s", "longmemeval_m", "longmemeval_oracle"):
        base = Path(os.environ.get(DATA_DIR_ENV, "."))
        for candidate in (base / f"{name}.json", base / f"{name}_cleaned.json"):
            if candidate.is_file():
                return candidate
        raise FileNotFoundError(
            f"{name}.json not found in {base.resolve()}; download it and set {DATA_DIR_ENV}"
        )
    path = Path(name)
    if not path.is_file():
        raise FileNotFoundError(f"benchmark file {path} does not exist")
    return path
