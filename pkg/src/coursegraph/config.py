"""Pipeline configuration: one flat key-value file plus CLI-flag overrides.

Defaults follow the reference hyperparameters. Config files contain lines of
the form ``key = value`` with ``#`` comments; unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


@dataclass
class PipelineConfig:
    # ingestion
    max_tokens: int = 8191
    merge_peers: bool = True
    # clustering
    clusterer: str = "density"          # density | threshold
    n_components: int = 15
    n_neighbors: int = 15
    min_cluster_size: int = 5
    fallback_threshold: float = 0.8
    # evidence selection
    max_evidence_chunks: int = 3
    max_clusters_per_pair: int = 1
    relation_batch: int = 8
    # LLM inference
    temperature: float = 0.1
    concurrency: int = 5
    max_attempts: int = 3
    # student mapping
    candidate_pool: int = 60
    min_confidence: float = 0.70
    trace_depth: int = 2
    # evaluation
    excerpt_k: int = 5
    excerpt_chars: int = 1200
    course_name: str = "Course"
    # backends
    backend: str = "stub"               # stub | openai
    embedding_backend: str = ""         # defaults to `backend`; also: local
    model: str = ""
    embedding_model: str = ""
    embedding_dim: int = 64
    stub_fixtures: str = ""
    # ablation and behavior flags
    no_roles: bool = False
    no_clustering: bool = False
    swap_on_null: bool = False
    enforce_dag: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive_ints = ("max_tokens", "n_components", "n_neighbors",
                         "min_cluster_size", "max_evidence_chunks",
                         "max_clusters_per_pair", "relation_batch", "concurrency",
                         "max_attempts", "candidate_pool", "trace_depth",
                         "excerpt_k", "excerpt_chars", "embedding_dim")
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not 0.0 < self.temperature <= 1.0:
            raise ConfigError("temperature must be in (0, 1]")
        if not 0.0 < self.fallback_threshold <= 1.0:
            raise ConfigError("fallback_threshold must be in (0, 1]")
        if not 0.0 < self.min_confidence <= 1.0:
            raise ConfigError("min_confidence must be in (0, 1]")
        if self.clusterer not in ("density", "threshold"):
            raise ConfigError(f"unknown clusterer {self.clusterer!r}")
        if self.backend not in ("stub", "openai"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "openai" and not self.model:
            raise ConfigError("backend 'openai' requires a model name")
        if self.embedding_backend not in ("", "stub", "openai", "local"):
            raise ConfigError(f"unknown embedding_backend {self.embedding_backend!r}")

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    @classmethod
    def from_dict(cls, values: dict) -> "PipelineConfig":
        known = cls.field_names()
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        values: dict = {}
        known = cls.field_names()
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _coerce(key, raw, lineno, path)
        return cls.from_dict(values)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_BOOL_FIELDS = {"merge_peers", "no_roles", "no_clustering", "swap_on_null", "enforce_dag"}
_FLOAT_FIELDS = {"temperature", "fallback_threshold", "min_confidence"}
_STR_FIELDS = {"clusterer", "backend", "embedding_backend", "model",
               "embedding_model", "stub_fixtures", "course_name"}


def _coerce(key: str, raw: str, lineno: int, path) -> object:
    if key in _BOOL_FIELDS:
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"{path}:{lineno}: {key} expects a boolean, got {raw!r}")
    if key in _FLOAT_FIELDS:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: {key} expects a number, got {raw!r}")
    if key in _STR_FIELDS:
        return raw
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: {key} expects an integer, got {raw!r}")
