"""Concept knowledge graphs from ordered lecture materials."""

from .config import PipelineConfig
from .gateway import Gateway, StubChatBackend, StubEmbeddingBackend, build_gateway
from .pipeline import run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Gateway",
    "PipelineConfig",
    "StubChatBackend",
    "StubEmbeddingBackend",
    "build_gateway",
    "run_pipeline",
    "__version__",
]
