"""Tag assessment questions to graph concepts and trace errors to gaps.

Tagging embeds the question text against every concept's display form,
keeps the top ``pool_size`` candidates, and asks the LLM to pick applicable
concepts with confidences; tags under ``min_confidence`` are dropped.
Gap tracing walks outgoing ``depends_on`` edges only (prerequisite
semantics), breadth-first, reporting each reached prerequisite once with
its shortest path.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyQuestion, MalformedResponse, UnknownConcept
from .gateway import (CompletionRequest, Gateway,
                      DEFAULT_MAX_ATTEMPTS, DEFAULT_TEMPERATURE)
from .prompts import (ERROR_DIFF_PROMPT, QUESTION_TAG_PROMPT,
                      render_diff_user_prompt, render_tag_user_prompt)
from .relations import KnowledgeGraph

logger = logging.getLogger(__name__)

DEFAULT_POOL_SIZE = 60
DEFAULT_MIN_CONFIDENCE = 0.70
DEFAULT_TRACE_DEPTH = 2


@dataclass(frozen=True)
class QuestionTag:
    question_id: str
    concept_id: str
    confidence: float


@dataclass(frozen=True)
class PrerequisiteGap:
    concept_id: str
    path: tuple[tuple[str, str], ...]  # depends_on hops walked from the error

    @property
    def hops(self) -> int:
        return len(self.path)


@dataclass(frozen=True)
class GapReport:
    question_id: str
    error_concepts: tuple[str, ...]
    prerequisite_gaps: tuple[PrerequisiteGap, ...]


def candidate_pool(question_text: str, graph: KnowledgeGraph,
                   gateway: Gateway, pool_size: int) -> list[tuple[str, str]]:
    """Top concepts by cosine between the question and each display form."""
    concept_ids = sorted(graph.nodes)
    displays = [graph.nodes[cid].display for cid in concept_ids]
    vectors = gateway.embed_texts([question_text] + displays)
    query, concept_vectors = vectors[0], vectors[1:]
    scored = sorted(
        ((float(np.dot(query, vector)), cid) for cid, vector in
         zip(concept_ids, concept_vectors)),
        key=lambda item: (-item[0], item[1]))
    return [(cid, graph.nodes[cid].display) for _, cid in scored[:pool_size]]


def tag_question(question_id: str, question_text: str, graph: KnowledgeGraph,
                 gateway: Gateway,
                 pool_size: int = DEFAULT_POOL_SIZE,
                 min_confidence: float = DEFAULT_MIN_CONFIDENCE,
                 temperature: float = DEFAULT_TEMPERATURE,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> list[QuestionTag]:
    """Embedding-based candidate selection followed by LLM concept assignment."""
    if not question_text.strip():
        raise EmptyQuestion(f"question {question_id} has no text")
    if not graph.nodes:
        raise ValueError("graph has no nodes to tag against")

    pool = candidate_pool(question_text, graph, gateway, pool_size)
    request = CompletionRequest(
        request_id=f"tag:{question_id}",
        system_prompt=QUESTION_TAG_PROMPT,
        user_prompt=render_tag_user_prompt(question_text, pool),
        temperature=temperature,
        max_attempts=max_attempts,
    )
    try:
        result = gateway.complete_json(request)
    except MalformedResponse as exc:
        logger.warning("question %s: tagging response unparseable (%s); no tags",
                       question_id, exc)
        return []

    pool_ids = {cid for cid, _ in pool}
    tags = []
    seen: set[str] = set()
    raw_tags = result.value.get("tags")
    if not isinstance(raw_tags, list):
        return []
    for item in raw_tags:
        if not isinstance(item, dict):
            continue
        concept_id = item.get("concept_id")
        if not isinstance(concept_id, str):
            continue
        if concept_id not in pool_ids or concept_id in seen:
            continue
        try:
            confidence = float(item.get("confidence"))
        except (TypeError, ValueError):
            continue
        if confidence < min_confidence:
            continue
        seen.add(concept_id)
        tags.append(QuestionTag(question_id=question_id, concept_id=concept_id,
                                confidence=min(1.0, confidence)))
    return tags


def trace_error(error_concepts: Sequence[str], graph: KnowledgeGraph,
                depth: int | None = DEFAULT_TRACE_DEPTH) -> list[PrerequisiteGap]:
    """Breadth-first walk along outgoing depends_on edges, up to ``depth`` hops.

    ``depth=None`` walks the full transitive closure. The error concepts
    themselves are not reported as gaps.
    """
    for concept_id in error_concepts:
        if concept_id not in graph.nodes:
            raise UnknownConcept(f"{concept_id} is not a graph node")

    prerequisites: dict[str, list[str]] = {}
    for edge in graph.edges:
        if edge.relation == "depends_on":
            prerequisites.setdefault(edge.source, []).append(edge.target)
    for targets in prerequisites.values():
        targets.sort()

    visited = set(error_concepts)
    gaps: list[PrerequisiteGap] = []
    frontier: list[tuple[str, tuple[tuple[str, str], ...]]] = [
        (cid, ()) for cid in error_concepts]
    while frontier:
        next_frontier: list[tuple[str, tuple[tuple[str, str], ...]]] = []
        for concept_id, path in frontier:
            if depth is not None and len(path) >= depth:
                continue
            for target in prerequisites.get(concept_id, []):
                if target in visited:
                    continue
                visited.add(target)
                gap_path = path + ((concept_id, target),)
                gaps.append(PrerequisiteGap(concept_id=target, path=gap_path))
                next_frontier.append((target, gap_path))
        frontier = next_frontier
    return gaps


Differ = Callable[[dict, dict, Sequence[QuestionTag]], list[str]]


def llm_differ(graph: KnowledgeGraph, gateway: Gateway,
               temperature: float = DEFAULT_TEMPERATURE,
               max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> Differ:
    """Default submission-diff step: one LLM call constrained to the tags."""

    def diff(question: dict, submission: dict,
             tags: Sequence[QuestionTag]) -> list[str]:
        if not tags:
            return []
        tagged = [(t.concept_id, graph.nodes[t.concept_id].display) for t in tags]
        request = CompletionRequest(
            request_id=f"diff:{question['question_id']}:{submission.get('student_id', '')}",
            system_prompt=ERROR_DIFF_PROMPT,
            user_prompt=render_diff_user_prompt(
                question["text"], question.get("expected_solution", ""),
                submission["answer"], tagged),
            temperature=temperature,
            max_attempts=max_attempts,
        )
        try:
            result = gateway.complete_json(request)
        except MalformedResponse as exc:
            logger.warning("submission diff unparseable (%s); no error concepts", exc)
            return []
        raw = result.value.get("error_concepts")
        if not isinstance(raw, list):
            return []
        allowed = {t.concept_id for t in tags}
        ordered = []
        for concept_id in raw:
            if isinstance(concept_id, str) and concept_id in allowed \
                    and concept_id not in ordered:
                ordered.append(concept_id)
        return ordered

    return diff


def map_student_errors(questions: Sequence[dict], submissions: Sequence[dict],
                       graph: KnowledgeGraph, gateway: Gateway,
                       pool_size: int = DEFAULT_POOL_SIZE,
                       min_confidence: float = DEFAULT_MIN_CONFIDENCE,
                       depth: int | None = DEFAULT_TRACE_DEPTH,
                       differ: Differ | None = None,
                       temperature: float = DEFAULT_TEMPERATURE,
                       max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> list[dict]:
    """Tag each question, diff each submission, and trace gaps through the graph."""
    differ = differ or llm_differ(graph, gateway, temperature, max_attempts)
    tags_by_question = {
        q["question_id"]: tag_question(q["question_id"], q["text"], graph, gateway,
                                       pool_size, min_confidence,
                                       temperature, max_attempts)
        for q in questions
    }
    questions_by_id = {q["question_id"]: q for q in questions}

    reports = []
    for submission in submissions:
        question = questions_by_id.get(submission["question_id"])
        if question is None:
            continue
        tags = tags_by_question[question["question_id"]]
        error_concepts = differ(question, submission, tags)
        gaps = trace_error(error_concepts, graph, depth)
        reports.append({
            "question_id": question["question_id"],
            "student_id": submission.get("student_id", ""),
            "error_concepts": list(error_concepts),
            "prerequisite_gaps": [
                {"concept_id": gap.concept_id,
                 "hops": gap.hops,
                 "path": [[source, target] for source, target in gap.path]}
                for gap in gaps
            ],
        })
    return reports
