from __future__ import annotations

import os
from pathlib import Path

import pytest

from chronos.eval import load_benchmark
from chronos.eval.datasets import mini_path, mini_scripts
from chronos.providers import build_providers

GOLDEN = Path(__file__).parent / "golden"


def golden_check(name: str, text: str) -> None:
    """Compare ``text`` with tests/golden/<name>; CHRONOS_UPDATE_GOLDEN=1 rewrites it."""
    path = GOLDEN / name
    if os.environ.get("CHRONOS_UPDATE_GOLDEN") == "1" or not path.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(text.encode("utf-8"))
    assert path.read_bytes() == text.encode("utf-8"), f"{name} differs from the golden file"


@pytest.fixture(scope="session")
def mini_questions():
    return load_benchmark(mini_path())


@pytest.fixture
def mini_providers():
    return build_providers("mock", scripts=mini_scripts())


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criteria")
