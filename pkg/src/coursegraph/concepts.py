"""Concept extraction, canonical ids, pedagogical roles, and the mention index.

Concept surfaces come back from the extraction prompt one chunk at a time;
canonical ids uppercase the surface and map every non-alphanumeric character
to an underscore, so surfaces that collide ("merge-sort", "merge sort")
become one node keeping the earliest-seen display form. Each (chunk,
concept) pair gets one role-classification call; the resulting mentions
carry the role plus a substring-verified snippet.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyConcept, PipelineError
from .gateway import (CompletionRequest, Gateway, JsonResult,
                      DEFAULT_MAX_ATTEMPTS, DEFAULT_TEMPERATURE)
from .ingest import Chunk, Corpus
from .prompts import (CONCEPT_EXTRACTION_PROMPT, ROLE_CLASSIFICATION_PROMPT,
                      ROLE_ORDER, render_role_user_prompt)

ROLES = ROLE_ORDER  # Definition, Example, Assumption, NA

_NON_ALNUM_RE = re.compile(r"[^A-Za-z0-9]")
_ROLE_LOOKUP = {role.lower(): role for role in ROLES}


def canonicalize(surface: str) -> str:
    """Uppercase the surface and replace each non-alphanumeric char with ``_``.

    Idempotent and case-collapsing; raises ``EmptyConcept`` when nothing is
    left after trimming.
    """
    trimmed = surface.strip()
    if not trimmed:
        raise EmptyConcept("concept surface is empty after trimming")
    return _NON_ALNUM_RE.sub("_", trimmed).upper()


@dataclass(frozen=True)
class RoleLabel:
    role: str
    snippet: str


@dataclass(frozen=True)
class ConceptMention:
    concept_id: str
    display: str
    chunk_id: str
    lecture_id: str
    lecture_index: int
    chunk_index: int
    role: str
    snippet: str


def extraction_request(chunk: Chunk, temperature: float = DEFAULT_TEMPERATURE,
                       max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> CompletionRequest:
    return CompletionRequest(
        request_id=f"extract:{chunk.chunk_id}",
        system_prompt=CONCEPT_EXTRACTION_PROMPT,
        user_prompt=chunk.text,
        temperature=temperature,
        max_attempts=max_attempts,
    )


def parse_concept_surfaces(result: JsonResult) -> list[str]:
    """Case-insensitive dedup with first-seen order; keeps 1-5 word surfaces."""
    raw = result.value.get("concepts")
    surfaces: list[str] = []
    seen: set[str] = set()
    if not isinstance(raw, list):
        return surfaces
    for item in raw:
        if not isinstance(item, str):
            continue
        surface = item.strip()
        if not surface or len(surface.split()) > 5:
            continue
        key = surface.lower()
        if key in seen:
            continue
        seen.add(key)
        surfaces.append(surface)
    return surfaces


def extract_concepts(chunk: Chunk, gateway: Gateway,
                     temperature: float = DEFAULT_TEMPERATURE,
                     max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> list[str]:
    """Extract concept surface strings from one chunk."""
    result = gateway.complete_json(extraction_request(chunk, temperature, max_attempts))
    return parse_concept_surfaces(result)


def role_request(chunk: Chunk, concept_display: str,
                 temperature: float = DEFAULT_TEMPERATURE,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> CompletionRequest:
    return CompletionRequest(
        request_id=f"role:{chunk.chunk_id}:{canonicalize(concept_display)}",
        system_prompt=ROLE_CLASSIFICATION_PROMPT,
        user_prompt=render_role_user_prompt(concept_display, chunk.text),
        temperature=temperature,
        max_attempts=max_attempts,
    )


def parse_role_label(result: JsonResult, chunk_text: str) -> RoleLabel:
    """Validate the role value and verify the snippet against the chunk text.

    Unrecognized role strings downgrade to NA; snippets that are not exact
    substrings of the chunk are cleared while the role is kept.
    """
    role = _ROLE_LOOKUP.get(str(result.value.get("role", "")).strip().lower(), "NA")
    snippet = result.value.get("snippet")
    snippet = snippet if isinstance(snippet, str) else ""
    if role == "NA" or snippet not in chunk_text:
        snippet = ""
    return RoleLabel(role=role, snippet=snippet)


def classify_role(chunk: Chunk, concept_display: str, gateway: Gateway,
                  temperature: float = DEFAULT_TEMPERATURE,
                  max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> RoleLabel:
    result = gateway.complete_json(role_request(chunk, concept_display,
                                                temperature, max_attempts))
    return parse_role_label(result, chunk.text)


def build_mention_index(
    mentions: Sequence[ConceptMention],
) -> tuple[list[ConceptMention], dict[str, tuple[int, int]]]:
    """Deduplicate mentions per (concept, chunk) and compute first introductions.

    The first introduction of a concept is the lexicographic minimum of its
    mentions' (lecture_index, chunk_index) coordinates.
    """
    unique: dict[tuple[str, str], ConceptMention] = {}
    for mention in mentions:
        unique.setdefault((mention.concept_id, mention.chunk_id), mention)
    ordered = sorted(unique.values(),
                     key=lambda m: (m.lecture_index, m.chunk_index, m.concept_id))
    first_intro: dict[str, tuple[int, int]] = {}
    for mention in ordered:
        coordinate = (mention.lecture_index, mention.chunk_index)
        current = first_intro.get(mention.concept_id)
        if current is None or coordinate < current:
            first_intro[mention.concept_id] = coordinate
    return ordered, first_intro


def mine_concepts(
    corpus: Corpus, gateway: Gateway, *,
    no_roles: bool = False,
    temperature: float = DEFAULT_TEMPERATURE,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> tuple[list[ConceptMention], dict[str, tuple[int, int]]]:
    """Run extraction and role classification over the whole corpus.

    With ``no_roles`` every mention records role NA and no role calls are
    made. Gateway failures propagate with the offending chunk named.
    """
    extraction_results = gateway.run_batch(
        [extraction_request(c, temperature, max_attempts) for c in corpus.chunks])

    display_of: dict[str, str] = {}
    chunk_concepts: list[tuple[Chunk, list[tuple[str, str]]]] = []
    for chunk, result in zip(corpus.chunks, extraction_results):
        if isinstance(result, PipelineError):
            raise result
        pairs: list[tuple[str, str]] = []
        chunk_seen: set[str] = set()
        for surface in parse_concept_surfaces(result):
            concept_id = canonicalize(surface)
            display_of.setdefault(concept_id, surface)
            if concept_id in chunk_seen:
                continue
            chunk_seen.add(concept_id)
            pairs.append((concept_id, surface))
        chunk_concepts.append((chunk, pairs))

    roles: dict[tuple[str, str], RoleLabel] = {}
    if not no_roles:
        requests = []
        keys = []
        for chunk, pairs in chunk_concepts:
            for concept_id, surface in pairs:
                requests.append(role_request(chunk, surface, temperature, max_attempts))
                keys.append((chunk.chunk_id, concept_id, chunk.text))
        role_results = gateway.run_batch(requests)
        for (chunk_id, concept_id, chunk_text), result in zip(keys, role_results):
            if isinstance(result, PipelineError):
                raise result
            roles[(chunk_id, concept_id)] = parse_role_label(result, chunk_text)

    mentions = []
    for chunk, pairs in chunk_concepts:
        for concept_id, _surface in pairs:
            label = roles.get((chunk.chunk_id, concept_id), RoleLabel("NA", ""))
            mentions.append(ConceptMention(
                concept_id=concept_id,
                display=display_of[concept_id],
                chunk_id=chunk.chunk_id,
                lecture_id=chunk.lecture_id,
                lecture_index=chunk.lecture_index,
                chunk_index=chunk.chunk_index,
                role=label.role,
                snippet=label.snippet,
            ))
    return build_mention_index(mentions)


def mentions_to_rows(mentions: Sequence[ConceptMention]) -> list[dict]:
    return [
        {"concept_id": m.concept_id, "display": m.display, "chunk_id": m.chunk_id,
         "lecture_id": m.lecture_id, "lecture_index": m.lecture_index,
         "chunk_index": m.chunk_index, "role": m.role, "snippet": m.snippet}
        for m in mentions
    ]


def mentions_from_rows(rows: Sequence[dict]) -> list[ConceptMention]:
    return [ConceptMention(**row) for row in rows]


def first_intro_to_dict(first_intro: dict[str, tuple[int, int]]) -> dict[str, list[int]]:
    return {cid: list(coord) for cid, coord in first_intro.items()}


def first_intro_from_dict(data: dict[str, list[int]]) -> dict[str, tuple[int, int]]:
    return {cid: (coord[0], coord[1]) for cid, coord in data.items()}
