"""Order lecture documents, split them into identified chunks, build the corpus.

Documents sort by the first integer in their filename; unnumbered files sort
after numbered ones, alphabetically. Chunks get ids of the form
``lecture_id + "__" + chunk_index`` and a global order of
``(lecture_index, chunk_index)``.

The primary ingestion path reads plain-text/Markdown files whose pages are
separated by form feeds; other converters plug in through the same
``LectureDoc`` interface via the ``page_reader`` hook.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

from .errors import DuplicateLectureId, EmptyDocument
from .storage import canonical_json, sha256_text

DEFAULT_MAX_TOKENS = 8191
PAGE_SEPARATOR = "\f"

TokenCounter = Callable[[str], int]

_FIRST_INT_RE = re.compile(r"\d+")
_PARAGRAPH_SPLIT_RE = re.compile(r"\n\s*\n")


def count_tokens(text: str) -> int:
    """Default token oracle: whitespace word count x 1.3, rounded up."""
    return math.ceil(len(text.split()) * 1.3)


@dataclass(frozen=True)
class LectureDoc:
    lecture_id: str
    source_path: str
    order_key: tuple
    lecture_index: int
    pages: tuple[str, ...] = ()


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    lecture_id: str
    chunk_index: int
    lecture_index: int
    page_numbers: tuple[int, ...]
    text: str
    token_count: int


@dataclass(frozen=True)
class LectureSummary:
    lecture_id: str
    source_path: str
    lecture_index: int
    page_count: int


@dataclass(frozen=True)
class Corpus:
    chunks: tuple[Chunk, ...]
    lectures: tuple[LectureSummary, ...]
    config_fingerprint: str

    @cached_property
    def chunk_map(self) -> dict[str, Chunk]:
        return {c.chunk_id: c for c in self.chunks}

    def to_dict(self) -> dict:
        return {
            "config_fingerprint": self.config_fingerprint,
            "lectures": [
                {"lecture_id": l.lecture_id, "source_path": l.source_path,
                 "lecture_index": l.lecture_index, "page_count": l.page_count}
                for l in self.lectures
            ],
            "chunks": [
                {"chunk_id": c.chunk_id, "lecture_id": c.lecture_id,
                 "chunk_index": c.chunk_index, "lecture_index": c.lecture_index,
                 "page_numbers": list(c.page_numbers), "text": c.text,
                 "token_count": c.token_count}
                for c in self.chunks
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Corpus":
        chunks = tuple(
            Chunk(chunk_id=row["chunk_id"], lecture_id=row["lecture_id"],
                  chunk_index=row["chunk_index"], lecture_index=row["lecture_index"],
                  page_numbers=tuple(row["page_numbers"]), text=row["text"],
                  token_count=row["token_count"])
            for row in data["chunks"]
        )
        lectures = tuple(
            LectureSummary(lecture_id=row["lecture_id"], source_path=row["source_path"],
                           lecture_index=row["lecture_index"], page_count=row["page_count"])
            for row in data["lectures"]
        )
        return cls(chunks=chunks, lectures=lectures,
                   config_fingerprint=data["config_fingerprint"])


def parse_chunk_id(chunk_id: str) -> tuple[str, int]:
    lecture_id, _, index = chunk_id.rpartition("__")
    if not lecture_id or not index.isdigit():
        raise ValueError(f"malformed chunk id {chunk_id!r}")
    return lecture_id, int(index)


def normalize_lecture_id(path: str) -> str:
    return re.sub(r"\s+", "_", Path(path).stem.strip())


def order_documents(paths: Sequence[str]) -> list[LectureDoc]:
    """Sort documents into teaching order and assign lecture indexes.

    Ascending by the first integer in the basename; files without one come
    after all numbered files. Ties break alphabetically on the basename.
    """
    if not paths:
        raise ValueError("no documents given")
    if len(set(str(p) for p in paths)) != len(paths):
        raise ValueError("duplicate document paths")

    keyed = []
    for path in paths:
        stem = Path(path).stem
        match = _FIRST_INT_RE.search(stem)
        if match:
            order_key = (0, int(match.group()), stem.lower())
        else:
            order_key = (1, 0, stem.lower())
        keyed.append((order_key, str(path)))
    keyed.sort(key=lambda item: item[0])

    seen: dict[str, str] = {}
    docs = []
    for index, (order_key, path) in enumerate(keyed):
        lecture_id = normalize_lecture_id(path)
        if lecture_id in seen:
            raise DuplicateLectureId(
                f"{path} and {seen[lecture_id]} both normalize to {lecture_id!r}")
        seen[lecture_id] = path
        docs.append(LectureDoc(lecture_id=lecture_id, source_path=path,
                               order_key=order_key, lecture_index=index))
    return docs


def read_text_pages(path: str) -> tuple[str, ...]:
    """Read a plain-text/Markdown lecture; pages are form-feed separated."""
    content = Path(path).read_text(encoding="utf-8")
    return tuple(content.split(PAGE_SEPARATOR))


def load_pages(doc: LectureDoc,
               page_reader: Callable[[str], Sequence[str]] = read_text_pages) -> LectureDoc:
    return replace(doc, pages=tuple(page_reader(doc.source_path)))


def _split_oversized(text: str, max_tokens: int, token_counter: TokenCounter) -> list[str]:
    pieces = []
    current: list[str] = []
    for word in text.split():
        if token_counter(word) > max_tokens:
            raise ValueError(f"max_tokens={max_tokens} cannot fit a single word")
        if current and token_counter(" ".join(current + [word])) > max_tokens:
            pieces.append(" ".join(current))
            current = [word]
        else:
            current.append(word)
    if current:
        pieces.append(" ".join(current))
    return pieces


def chunk_document(doc: LectureDoc, max_tokens: int = DEFAULT_MAX_TOKENS,
                   merge_peers: bool = True,
                   token_counter: TokenCounter = count_tokens) -> list[Chunk]:
    """Split one lecture into chunks of at most ``max_tokens``.

    Pages are the base segments; oversized pages split at paragraph breaks
    and, as a last resort, at word boundaries. With ``merge_peers`` adjacent
    segments coalesce greedily while the merged text stays within the limit.
    """
    segments: list[tuple[str, list[int]]] = []
    for page_number, page in enumerate(doc.pages, start=1):
        page_text = page.strip()
        if not page_text:
            continue
        if token_counter(page_text) <= max_tokens:
            segments.append((page_text, [page_number]))
            continue
        for paragraph in _PARAGRAPH_SPLIT_RE.split(page_text):
            paragraph = paragraph.strip()
            if not paragraph:
                continue
            if token_counter(paragraph) <= max_tokens:
                segments.append((paragraph, [page_number]))
            else:
                for piece in _split_oversized(paragraph, max_tokens, token_counter):
                    segments.append((piece, [page_number]))

    if not segments:
        raise EmptyDocument(f"{doc.lecture_id} has no non-empty page")

    if merge_peers:
        merged: list[tuple[str, list[int]]] = [segments[0]]
        for text, pages in segments[1:]:
            previous_text, previous_pages = merged[-1]
            candidate = previous_text + "\n\n" + text
            if token_counter(candidate) <= max_tokens:
                merged[-1] = (candidate, previous_pages + pages)
            else:
                merged.append((text, pages))
        segments = merged

    chunks = []
    for chunk_index, (text, pages) in enumerate(segments):
        chunks.append(Chunk(
            chunk_id=f"{doc.lecture_id}__{chunk_index}",
            lecture_id=doc.lecture_id,
            chunk_index=chunk_index,
            lecture_index=doc.lecture_index,
            page_numbers=tuple(sorted(set(pages))),
            text=text,
            token_count=token_counter(text),
        ))
    return chunks


def ingest_fingerprint(max_tokens: int, merge_peers: bool) -> str:
    return sha256_text(canonical_json({
        "max_tokens": max_tokens,
        "merge_peers": merge_peers,
        "tokenizer": "whitespace-words-x1.3-ceil",
    }))


def build_corpus(paths: Sequence[str], max_tokens: int = DEFAULT_MAX_TOKENS,
                 merge_peers: bool = True,
                 token_counter: TokenCounter = count_tokens,
                 page_reader: Callable[[str], Sequence[str]] = read_text_pages) -> Corpus:
    """Order, load, and chunk all documents into a globally ordered corpus."""
    docs = [load_pages(doc, page_reader) for doc in order_documents(paths)]
    chunks: list[Chunk] = []
    lectures = []
    for doc in docs:
        chunks.extend(chunk_document(doc, max_tokens=max_tokens,
                                     merge_peers=merge_peers,
                                     token_counter=token_counter))
        lectures.append(LectureSummary(lecture_id=doc.lecture_id,
                                       source_path=doc.source_path,
                                       lecture_index=doc.lecture_index,
                                       page_count=len(doc.pages)))
    return Corpus(chunks=tuple(chunks), lectures=tuple(lectures),
                  config_fingerprint=ingest_fingerprint(max_tokens, merge_peers))


def discover_documents(input_dir: str) -> list[str]:
    """List ingestable files (txt/md) directly under ``input_dir``."""
    root = Path(input_dir)
    paths = sorted(str(p) for p in root.iterdir()
                   if p.is_file() and p.suffix.lower() in {".txt", ".md", ".markdown"})
    if not paths:
        raise ValueError(f"no lecture documents found in {input_dir}")
    return paths
