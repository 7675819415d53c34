"""Excerpt-grounded judging of graph nodes and edges, plus score aggregation.

Nodes are scored for course significance and edges for relation/direction
accuracy, each on the strict {0, 1, 2} ordinal scale, grounded on the top-k
chunks retrieved by embedding cosine against the query. Scores normalize to
[0, 1] and aggregate as mean plus population standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyScoreList, MalformedResponse, PipelineError
from .gateway import (CompletionRequest, Gateway, JsonResult,
                      DEFAULT_MAX_ATTEMPTS, DEFAULT_TEMPERATURE)
from .ingest import Corpus
from .prompts import render_excerpt_block, render_node_prompt, render_triplet_prompt
from .relations import GraphEdge, KnowledgeGraph

DEFAULT_EXCERPT_K = 5
DEFAULT_EXCERPT_CHARS = 1200
VALID_SCORES = (0, 1, 2)
INSUFFICIENT_SCORE = 1  # the prompts' own insufficient-evidence convention


@dataclass(frozen=True)
class Excerpt:
    excerpt_id: int
    chunk_id: str
    text: str


@dataclass(frozen=True)
class JudgeScore:
    subject: str
    score: int
    rationale: str
    evidence_ids: tuple[int, ...]
    notes: tuple[str, ...]


@dataclass(frozen=True)
class ScoreReport:
    mean: float
    std: float
    count: int
    histogram: dict[int, int]


def retrieve_excerpts(query_text: str, corpus: Corpus,
                      embeddings: Mapping[str, np.ndarray], gateway: Gateway,
                      k: int = DEFAULT_EXCERPT_K,
                      max_chars: int = DEFAULT_EXCERPT_CHARS) -> list[Excerpt]:
    """Top-k chunks by cosine to the query; ties break in corpus order."""
    if k <= 0:
        return []
    k = min(k, len(corpus.chunks))
    query_vector = gateway.embed_texts([query_text])[0]
    scores = [float(np.dot(query_vector, embeddings[c.chunk_id]))
              for c in corpus.chunks]
    order = sorted(range(len(corpus.chunks)), key=lambda i: (-scores[i], i))
    excerpts = []
    for excerpt_id, position in enumerate(order[:k], start=1):
        chunk = corpus.chunks[position]
        text = chunk.text if len(chunk.text) <= max_chars else chunk.text[:max_chars] + "..."
        excerpts.append(Excerpt(excerpt_id=excerpt_id, chunk_id=chunk.chunk_id, text=text))
    return excerpts


def _parse_judge_score(result: JsonResult, subject: str,
                       provided_ids: set[int]) -> JudgeScore:
    value = result.value
    raw_score = value.get("score")
    if isinstance(raw_score, bool) or raw_score not in VALID_SCORES:
        return JudgeScore(
            subject=subject, score=INSUFFICIENT_SCORE, rationale="",
            evidence_ids=(),
            notes=(f"judge returned invalid score {raw_score!r}; defaulted to 1",))
    rationale = value.get("rationale")
    rationale = rationale if isinstance(rationale, str) else ""
    evidence_ids = []
    raw_evidence = value.get("evidence")
    if isinstance(raw_evidence, list):
        for item in raw_evidence:
            try:
                excerpt_id = int(item)
            except (TypeError, ValueError):
                continue
            if excerpt_id in provided_ids and excerpt_id not in evidence_ids:
                evidence_ids.append(excerpt_id)
    notes = tuple(str(n) for n in value.get("notes", []) if isinstance(n, str)) \
        if isinstance(value.get("notes"), list) else ()
    return JudgeScore(subject=subject, score=int(raw_score), rationale=rationale,
                      evidence_ids=tuple(evidence_ids), notes=notes)


def _insufficient(subject: str, error: PipelineError) -> JudgeScore:
    return JudgeScore(subject=subject, score=INSUFFICIENT_SCORE, rationale="",
                      evidence_ids=(),
                      notes=(f"no parseable judge response: {error}",))


def score_node(node_label: str, excerpts: Sequence[Excerpt], gateway: Gateway,
               course_name: str,
               temperature: float = DEFAULT_TEMPERATURE,
               max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> JudgeScore:
    """Judge whether a node is a significant course-content concept."""
    prompt = render_node_prompt(course_name, node_label, render_excerpt_block(excerpts))
    request = CompletionRequest(request_id=f"node_eval:{node_label}",
                                system_prompt="", user_prompt=prompt,
                                temperature=temperature, max_attempts=max_attempts)
    try:
        result = gateway.complete_json(request)
    except MalformedResponse as exc:
        return _insufficient(node_label, exc)
    return _parse_judge_score(result, node_label, {e.excerpt_id for e in excerpts})


def score_triplet(edge: GraphEdge, source_label: str, target_label: str,
                  excerpts: Sequence[Excerpt], gateway: Gateway, course_name: str,
                  temperature: float = DEFAULT_TEMPERATURE,
                  max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> JudgeScore:
    """Judge the relation type and direction of one typed edge."""
    subject = f"{edge.source}|{edge.relation}|{edge.target}"
    prompt = render_triplet_prompt(course_name, source_label, edge.relation,
                                   target_label, render_excerpt_block(excerpts))
    request = CompletionRequest(request_id=f"triplet_eval:{subject}",
                                system_prompt="", user_prompt=prompt,
                                temperature=temperature, max_attempts=max_attempts)
    try:
        result = gateway.complete_json(request)
    except MalformedResponse as exc:
        return _insufficient(subject, exc)
    return _parse_judge_score(result, subject, {e.excerpt_id for e in excerpts})


def aggregate_scores(scores: Sequence[JudgeScore]) -> ScoreReport:
    """Normalize raw {0,1,2} scores to [0,1]; population standard deviation."""
    if not scores:
        raise EmptyScoreList("no scores to aggregate")
    normalized = [s.score / 2 for s in scores]
    count = len(normalized)
    mean = sum(normalized) / count
    variance = sum((x - mean) ** 2 for x in normalized) / count
    histogram = {value: sum(1 for s in scores if s.score == value)
                 for value in VALID_SCORES}
    return ScoreReport(mean=mean, std=math.sqrt(variance), count=count,
                       histogram=histogram)


def evaluate_nodes(graph: KnowledgeGraph, corpus: Corpus,
                   embeddings: Mapping[str, np.ndarray], gateway: Gateway,
                   course_name: str, k: int = DEFAULT_EXCERPT_K,
                   max_chars: int = DEFAULT_EXCERPT_CHARS,
                   temperature: float = DEFAULT_TEMPERATURE,
                   max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> list[JudgeScore]:
    """Score every node, grounding each on excerpts retrieved for its display."""
    scores = []
    for concept_id, node in sorted(graph.nodes.items()):
        excerpts = retrieve_excerpts(node.display, corpus, embeddings, gateway,
                                     k=k, max_chars=max_chars)
        scores.append(score_node(node.display, excerpts, gateway, course_name,
                                 temperature, max_attempts))
    return scores


def evaluate_triplets(graph: KnowledgeGraph, corpus: Corpus,
                      embeddings: Mapping[str, np.ndarray], gateway: Gateway,
                      course_name: str, k: int = DEFAULT_EXCERPT_K,
                      max_chars: int = DEFAULT_EXCERPT_CHARS,
                      temperature: float = DEFAULT_TEMPERATURE,
                      max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> list[JudgeScore]:
    """Score every edge; the retrieval query concatenates both display forms."""
    scores = []
    for edge in graph.edges:
        source_label = graph.nodes[edge.source].display
        target_label = graph.nodes[edge.target].display
        excerpts = retrieve_excerpts(f"{source_label} {target_label}", corpus,
                                     embeddings, gateway, k=k, max_chars=max_chars)
        scores.append(score_triplet(edge, source_label, target_label, excerpts,
                                    gateway, course_name, temperature, max_attempts))
    return scores


def scores_to_report_dict(scores: Sequence[JudgeScore]) -> dict:
    report = aggregate_scores(scores)
    return {
        "scores": [
            {"subject": s.subject, "score": s.score, "rationale": s.rationale,
             "evidence_ids": list(s.evidence_ids), "notes": list(s.notes)}
            for s in scores
        ],
        "report": {"mean": report.mean, "std": report.std, "count": report.count,
                   "histogram": {str(k): v for k, v in report.histogram.items()}},
    }
