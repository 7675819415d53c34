"""Uniform access to a chat-completion backend and an embedding backend.

The gateway is the only concurrent component of the pipeline: ``run_batch``
holds at most ``limit`` requests in flight and always returns results in
input order. Gateway state is immutable after construction, so one instance
can be shared freely.

Two backend families ship here: an OpenAI-compatible HTTP client and
deterministic stubs. The stub chat backend is keyed by
``(prompt kind, content hash)`` against a fixture mapping and raises on
unmatched keys; the stub embedding backend projects hashed tokens onto a
fixed-dimension sphere so equal texts embed identically and related texts
keep a stable cosine geometry.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence, Union

import numpy as np

from .errors import BackendUnavailable, MalformedResponse, PipelineError, StubKeyMissing
from .prompts import prompt_kind

DEFAULT_TEMPERATURE = 0.1
DEFAULT_MAX_ATTEMPTS = 3
DEFAULT_CONCURRENCY = 5

# Appended to the user prompt on each JSON-repair retry. The stub backend
# strips it before hashing, which also tells it the attempt number.
REPAIR_INSTRUCTION = "\n\nReturn strict JSON only."

ENV_API_BASE = "COURSEGRAPH_API_BASE"
ENV_API_KEY = "COURSEGRAPH_API_KEY"


@dataclass(frozen=True)
class CompletionRequest:
    request_id: str
    system_prompt: str
    user_prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    max_attempts: int = DEFAULT_MAX_ATTEMPTS


@dataclass(frozen=True)
class JsonResult:
    value: dict
    raw_text: str
    attempts_used: int


class ChatBackend(Protocol):
    def complete(self, system_prompt: str, user_prompt: str, temperature: float) -> str:
        """Return the raw completion text for one chat request."""
        ...


class EmbeddingBackend(Protocol):
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        """Return one vector per input text, in input order."""
        ...


def strip_markdown_fences(text: str) -> str:
    """Drop a ``` / ```json fence pair, keeping only the fenced content.

    An unpaired fence is stripped only when it opens the text (truncated
    response); a lone fence elsewhere may be content and stays put.
    """
    if "```" not in text:
        return text
    parts = text.split("```")
    if len(parts) >= 3 or not parts[0].strip():
        inner = parts[1]
        if inner[:4].lower() == "json":
            inner = inner[4:]
        return inner.strip()
    return text


def extract_json_object(text: str) -> str | None:
    """Return the first balanced ``{...}`` region, honoring string escapes."""
    start = text.find("{")
    if start == -1:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start:i + 1]
    return None


def parse_json_object(text: str) -> dict | None:
    """Fence-strip, extract the first balanced object, parse; None on failure."""
    region = extract_json_object(strip_markdown_fences(text))
    if region is None:
        return None
    try:
        value = json.loads(region)
    except json.JSONDecodeError:
        return None
    return value if isinstance(value, dict) else None


def stub_key(system_prompt: str, user_prompt: str) -> str:
    """Fixture key for a stubbed completion: ``kind:sha256(prompts)[:16]``."""
    base_user = user_prompt.replace(REPAIR_INSTRUCTION, "")
    digest = hashlib.sha256(
        (system_prompt + "\x00" + base_user).encode("utf-8")
    ).hexdigest()[:16]
    return f"{prompt_kind(system_prompt, user_prompt)}:{digest}"


class StubChatBackend:
    """Deterministic chat backend answering from a fixture mapping.

    Fixture values are the raw completion text for a key, or a list of
    texts indexed by attempt number (the last entry repeats). Unmatched
    keys raise ``StubKeyMissing``.
    """

    def __init__(self, fixtures: Mapping[str, Union[str, list[str]]] | None = None):
        self._fixtures = dict(fixtures or {})

    @classmethod
    def from_file(cls, path: str) -> "StubChatBackend":
        with open(path, encoding="utf-8") as handle:
            return cls(json.load(handle))

    def to_mapping(self) -> dict[str, Union[str, list[str]]]:
        return dict(self._fixtures)

    def add(self, system_prompt: str, user_prompt: str,
            response: Union[str, list[str], dict]) -> str:
        """Register a response; dicts are serialized to JSON text. Returns the key."""
        if isinstance(response, dict):
            response = json.dumps(response, ensure_ascii=False)
        key = stub_key(system_prompt, user_prompt)
        self._fixtures[key] = response
        return key

    def complete(self, system_prompt: str, user_prompt: str, temperature: float) -> str:
        attempt = user_prompt.count(REPAIR_INSTRUCTION)
        key = stub_key(system_prompt, user_prompt)
        if key not in self._fixtures:
            raise StubKeyMissing(f"no stub fixture for key {key}")
        value = self._fixtures[key]
        if isinstance(value, list):
            if not value:
                raise StubKeyMissing(f"empty fixture list for key {key}")
            return value[min(attempt, len(value) - 1)]
        return value


class StubEmbeddingBackend:
    """Bag-of-hashed-words projection onto the unit sphere.

    Each lowercase alphanumeric token maps to a fixed pseudo-random vector
    seeded by its hash; a text embeds as the normalized token sum. Equal
    texts embed identically and texts sharing vocabulary have high cosine.
    """

    def __init__(self, dim: int = 64):
        self.dim = dim

    def _token_vector(self, token: str) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        return rng.standard_normal(self.dim)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        out = []
        for text in texts:
            tokens = re.findall(r"[a-z0-9]+", text.lower())
            if tokens:
                vector = np.sum([self._token_vector(t) for t in tokens], axis=0)
            else:
                vector = self._token_vector(text)
            norm = float(np.linalg.norm(vector))
            if norm == 0.0:
                vector = self._token_vector(text)
                norm = float(np.linalg.norm(vector))
            out.append((vector / norm).tolist())
        return out


class OpenAIChatBackend:
    """Minimal OpenAI-compatible ``/chat/completions`` client."""

    def __init__(self, model: str, api_base: str | None = None,
                 api_key: str | None = None, timeout: float = 120.0):
        self.model = model
        self.api_base = (api_base or os.environ.get(ENV_API_BASE)
                         or "https://api.openai.com/v1").rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.timeout = timeout

    def complete(self, system_prompt: str, user_prompt: str, temperature: float) -> str:
        import requests

        messages = []
        if system_prompt:
            messages.append({"role": "system", "content": system_prompt})
        messages.append({"role": "user", "content": user_prompt})
        payload = {"model": self.model, "messages": messages, "temperature": temperature}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(f"{self.api_base}/chat/completions",
                                     json=payload, headers=headers, timeout=self.timeout)
            response.raise_for_status()
            body = response.json()
            return body["choices"][0]["message"]["content"] or ""
        except Exception as exc:
            raise BackendUnavailable(f"chat backend failed: {exc}") from exc


class OpenAIEmbeddingBackend:
    """Minimal OpenAI-compatible ``/embeddings`` client."""

    def __init__(self, model: str, api_base: str | None = None,
                 api_key: str | None = None, timeout: float = 120.0):
        self.model = model
        self.api_base = (api_base or os.environ.get(ENV_API_BASE)
                         or "https://api.openai.com/v1").rstrip("/")
        self.api_key = api_key or os.environ.get(ENV_API_KEY, "")
        self.timeout = timeout

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(f"{self.api_base}/embeddings",
                                     json={"model": self.model, "input": list(texts)},
                                     headers=headers, timeout=self.timeout)
            response.raise_for_status()
            body = response.json()
            rows = sorted(body["data"], key=lambda row: row["index"])
            return [row["embedding"] for row in rows]
        except Exception as exc:
            raise BackendUnavailable(f"embedding backend failed: {exc}") from exc


class SentenceTransformerBackend:
    """Local sentence-transformers embedding backend (lazy model load)."""

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        self.model_name = model_name
        self._model = None

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer
            except ImportError as exc:
                raise BackendUnavailable(
                    "sentence-transformers is not installed; "
                    "install the 'local' extra to use this backend"
                ) from exc
            self._model = SentenceTransformer(self.model_name)
        vectors = self._model.encode(list(texts), normalize_embeddings=True)
        return [list(map(float, v)) for v in vectors]


class Gateway:
    """Chat completions with strict-JSON handling plus unit-norm embeddings."""

    def __init__(self, chat_backend: ChatBackend, embedding_backend: EmbeddingBackend,
                 concurrency: int = DEFAULT_CONCURRENCY):
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.chat_backend = chat_backend
        self.embedding_backend = embedding_backend
        self.concurrency = concurrency

    def complete_json(self, request: CompletionRequest) -> JsonResult:
        """Run one completion, retrying until the response parses as a JSON object.

        Parse failures retry with the repair instruction appended to the user
        prompt; transport failures retry unchanged. Raises ``MalformedResponse``
        or ``BackendUnavailable`` once ``max_attempts`` is exhausted.
        """
        if not request.system_prompt and not request.user_prompt:
            raise ValueError("request has empty prompts")
        if request.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

        user_prompt = request.user_prompt
        last_raw = ""
        last_transport: BackendUnavailable | None = None
        for attempt in range(1, request.max_attempts + 1):
            try:
                raw = self.chat_backend.complete(
                    request.system_prompt, user_prompt, request.temperature)
            except BackendUnavailable as exc:
                last_transport = exc
                continue
            last_transport = None
            last_raw = raw
            value = parse_json_object(raw)
            if value is not None:
                return JsonResult(value=value, raw_text=raw, attempts_used=attempt)
            user_prompt = user_prompt + REPAIR_INSTRUCTION
        if last_transport is not None:
            raise last_transport
        raise MalformedResponse(
            f"request {request.request_id}: no parseable JSON object in "
            f"{request.max_attempts} attempts",
            attempts_used=request.max_attempts,
            raw_text=last_raw)

    def embed_texts(self, texts: Sequence[str]) -> list[np.ndarray]:
        """Embed texts in order; every returned vector is unit-norm float64."""
        if not texts:
            return []
        if any(not t for t in texts):
            raise ValueError("cannot embed empty text")
        rows = self.embedding_backend.embed(list(texts))
        if len(rows) != len(texts):
            raise BackendUnavailable(
                f"embedding backend returned {len(rows)} vectors for {len(texts)} texts")
        vectors = []
        for row in rows:
            vector = np.asarray(row, dtype=np.float64)
            norm = float(np.linalg.norm(vector))
            if norm == 0.0:
                raise BackendUnavailable("embedding backend returned a zero vector")
            vectors.append(vector / norm)
        return vectors

    def run_batch(self, requests: Sequence[CompletionRequest],
                  limit: int | None = None) -> list[JsonResult | PipelineError]:
        """Run requests with at most ``limit`` in flight; results in input order.

        Per-request failures are returned positionally as exception instances
        instead of aborting sibling requests.
        """
        limit = self.concurrency if limit is None else limit
        if limit < 1:
            raise ValueError("limit must be >= 1")
        ids = [r.request_id for r in requests]
        if len(set(ids)) != len(ids):
            raise ValueError("request_id values must be unique within a batch")
        if not requests:
            return []
        results: list[JsonResult | PipelineError] = []
        with ThreadPoolExecutor(max_workers=limit) as pool:
            futures = [pool.submit(self.complete_json, r) for r in requests]
            for future in futures:
                try:
                    results.append(future.result())
                except PipelineError as exc:
                    results.append(exc)
        return results


def build_gateway(config) -> Gateway:
    """Construct the configured gateway (see ``config.PipelineConfig``)."""
    backend = config.backend
    if backend == "stub":
        chat: ChatBackend = (StubChatBackend.from_file(config.stub_fixtures)
                             if config.stub_fixtures else StubChatBackend())
    elif backend == "openai":
        chat = OpenAIChatBackend(model=config.model)
    else:
        raise ValueError(f"unknown chat backend {backend!r}")

    embedding = config.embedding_backend or backend
    if embedding == "stub":
        embedder: EmbeddingBackend = StubEmbeddingBackend(dim=config.embedding_dim)
    elif embedding == "openai":
        embedder = OpenAIEmbeddingBackend(model=config.embedding_model or config.model)
    elif embedding == "local":
        embedder = SentenceTransformerBackend(config.embedding_model or "all-MiniLM-L6-v2")
    else:
        raise ValueError(f"unknown embedding backend {embedding!r}")
    return Gateway(chat, embedder, concurrency=config.concurrency)
