from .base import (
    ChatProvider,
    ChatReply,
    ConfigurationError,
    Embedder,
    Extractor,
    ProviderFailure,
    Reranker,
    ToolCallRequest,
    with_retry,
)
from .config import MockScripts, ProviderSet, build_providers, load_config

__all__ = [
    "ChatProvider",
    "ChatReply",
    "ConfigurationError",
    "Embedder",
    "Extractor",
    "MockScripts",
    "ProviderFailure",
    "ProviderSet",
    "Reranker",
    "ToolCallRequest",
    "build_providers",
    "load_config",
    "with_retry",
]
