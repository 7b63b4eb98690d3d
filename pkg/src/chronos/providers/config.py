"""Provider configuration: one binding per model role, mock or remote.

Config file layout (TOML)::

    [roles.agent]
    model = "gpt-4o"
    cost = 2.5            # optional, relative; used to pick the guidance default

    [roles.embedder]
    model = "text-embedding-3-large"
    dimension = 3072

    [roles.reranker]
    model = "rerank-english-v3.0"

    [limits]
    requests_per_second = 5

Credentials come from the environment only: ``OPENAI_API_KEY``,
``OPENAI_BASE_URL`` (optional) and ``COHERE_API_KEY``.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping

from .base import ChatProvider, ConfigurationError, Embedder, Extractor, Reranker
from .mock import HashEmbedder, KeywordGuidanceChat, LexicalReranker, RuleExtractor, ScriptedChat, ScriptedExtractor

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

ROLES = ("extractor", "guidance", "agent", "judge", "embedder", "reranker")
CHAT_ROLES = ("extractor", "agent", "judge")

DEFAULT_ROLES: dict[str, dict[str, Any]] = {
    "extractor": {"model": "gpt-4o-mini"},
    "agent": {"model": "gpt-4o"},
    "judge": {"model": "gpt-4o"},
    "embedder": {"model": "text-embedding-3-large", "dimension": 3072},
    "reranker": {"model": "rerank-english-v3.0"},
}

Mode = Literal["mock", "remote"]


@dataclass
class ProviderSet:
    extractor: Extractor
    guidance: ChatProvider
    agent: ChatProvider
    judge: ChatProvider | None
    embedder: Embedder
    reranker: Reranker
    mode: str = "mock"
    models: dict[str, str] = field(default_factory=dict)


def load_config(path: str | os.PathLike | None) -> dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"provider config {p} does not exist")
    with p.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"cannot parse {p}: {exc}") from exc
    unknown = set(data.get("roles", {})) - set(ROLES)
    if unknown:
        raise ConfigurationError(f"unknown roles in {p}: {sorted(unknown)}")
    return data


def role_settings(config: Mapping[str, Any]) -> dict[str, dict[str, Any]]:
    """Merge configured roles over defaults; guidance falls back to the cheapest chat role."""
    configured = config.get("roles", {})
    roles = {name: {**DEFAULT_ROLES.get(name, {}), **configured.get(name, {})} for name in ROLES}
    if "guidance" not in configured:
        cheapest = min(
            CHAT_ROLES, key=lambda r: (float(roles[r].get("cost", math.inf)), CHAT_ROLES.index(r))
        )
        roles["guidance"] = dict(roles[cheapest])
    return roles


def _remote(config: Mapping[str, Any], env: Mapping[str, str]) -> ProviderSet:
    from ..extraction import ChatExtractor
    from .remote import DEFAULT_OPENAI_URL, CohereReranker, OpenAIChat, OpenAIEmbedder

    openai_key = env.get("OPENAI_API_KEY")
    cohere_key = env.get("COHERE_API_KEY")
    missing = [name for name, value in (("OPENAI_API_KEY", openai_key), ("COHERE_API_KEY", cohere_key)) if not value]
    if missing:
        raise ConfigurationError(f"remote providers need {', '.join(missing)} in the environment")
    base_url = env.get("OPENAI_BASE_URL") or DEFAULT_OPENAI_URL
    rps = float(config.get("limits", {}).get("requests_per_second", 5.0))
    roles = role_settings(config)

    def chat(role: str) -> OpenAIChat:
        return OpenAIChat(roles[role]["model"], openai_key, base_url, requests_per_second=rps)

    emb = roles["embedder"]
    return ProviderSet(
        extractor=ChatExtractor(chat("extractor")),
        guidance=chat("guidance"),
        agent=chat("agent"),
        judge=chat("judge"),
        embedder=OpenAIEmbedder(emb["model"], openai_key, base_url, dimension=int(emb.get("dimension", 3072)),
                                requests_per_second=rps),
        reranker=CohereReranker(roles["reranker"]["model"], cohere_key, requests_per_second=rps),
        mode="remote",
        models={r: str(roles[r].get("model", "")) for r in ROLES},
    )


@dataclass(frozen=True)
class MockScripts:
    """Scripts for the offline providers; empty scripts fall back to heuristics."""

    agent: Mapping[str, Any] = field(default_factory=dict)
    extractor: Mapping[str, Any] | None = None
    embedding_dimension: int = 64
    seed: int = 0


def build_providers(
    mode: Mode = "mock",
    config: Mapping[str, Any] | None = None,
    *,
    scripts: MockScripts | None = None,
    env: Mapping[str, str] | None = None,
) -> ProviderSet:
    """Bind every role. Remote mode checks credentials here, before any work starts."""
    config = config or {}
    if mode == "remote":
        return _remote(config, os.environ if env is None else env)
    if mode != "mock":
        raise ConfigurationError(f"unknown provider mode {mode!r}")
    scripts = scripts or MockScripts()
    extractor: Extractor = ScriptedExtractor(scripts.extractor) if scripts.extractor is not None else RuleExtractor()
    return ProviderSet(
        extractor=extractor,
        guidance=KeywordGuidanceChat(),
        agent=ScriptedChat(scripts.agent),
        judge=None,
        embedder=HashEmbedder(scripts.embedding_dimension, scripts.seed),
        reranker=LexicalReranker(),
        mode="mock",
        models={r: "mock" for r in ROLES},
    )
