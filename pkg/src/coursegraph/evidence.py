"""Candidate concept pairs and per-pair evidence packets.

Pairs come from two sources: chunk co-occurrence (both concepts mentioned in
one chunk) and cluster co-occurrence (both concepts in one non-noise
cluster's concept set). Pairs with neither form of evidence do not exist.
Pair keys are normalized alphabetically on the canonical ids so (A, B) and
(B, A) are the same candidate.

Evidence selection is priority-based: when co-occurring chunks exist they
are provided in corpus (teaching) order; otherwise representatives for each
concept are drawn from the largest shared cluster (lowest label on ties)
and interleaved a-first.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

from .clustering import ClusterAssignment, ClusterSummary, NOISE
from .errors import NoEvidence
from .ingest import Corpus
from .concepts import ConceptMention

DEFAULT_MAX_EVIDENCE_CHUNKS = 3
DEFAULT_MAX_CLUSTERS_PER_PAIR = 1


@dataclass(frozen=True)
class CandidatePair:
    a: str
    b: str
    display_a: str
    display_b: str
    has_chunk_cooccurrence: bool
    shared_clusters: tuple[int, ...]

    @property
    def key(self) -> tuple[str, str]:
        return (self.a, self.b)


@dataclass(frozen=True)
class EvidenceChunk:
    chunk_id: str
    lecture_id: str
    page_numbers: tuple[int, ...]
    text: str


@dataclass(frozen=True)
class EvidencePacket:
    pair: CandidatePair
    roles_a: dict[str, int]
    roles_b: dict[str, int]
    first_a: tuple[int, int]
    first_b: tuple[int, int]
    evidence_mode: str            # chunk | cluster
    evidence: tuple[EvidenceChunk, ...]
    source_cluster: int | None


def generate_candidate_pairs(mentions: Sequence[ConceptMention],
                             assignment: ClusterAssignment) -> list[CandidatePair]:
    """All unordered concept pairs with chunk or cluster evidence, key-sorted."""
    display: dict[str, str] = {}
    concepts_by_chunk: dict[str, set[str]] = {}
    for mention in mentions:
        display.setdefault(mention.concept_id, mention.display)
        concepts_by_chunk.setdefault(mention.chunk_id, set()).add(mention.concept_id)

    chunk_pairs: set[tuple[str, str]] = set()
    for concepts in concepts_by_chunk.values():
        chunk_pairs.update(combinations(sorted(concepts), 2))

    cluster_concepts: dict[int, set[str]] = {}
    for chunk_id, label in assignment.labels.items():
        if label == NOISE:
            continue
        cluster_concepts.setdefault(label, set()).update(
            concepts_by_chunk.get(chunk_id, set()))

    clusters_by_pair: dict[tuple[str, str], set[int]] = {}
    for label in sorted(cluster_concepts):
        for pair in combinations(sorted(cluster_concepts[label]), 2):
            clusters_by_pair.setdefault(pair, set()).add(label)

    pairs = []
    for a, b in sorted(chunk_pairs | set(clusters_by_pair)):
        pairs.append(CandidatePair(
            a=a, b=b,
            display_a=display[a], display_b=display[b],
            has_chunk_cooccurrence=(a, b) in chunk_pairs,
            shared_clusters=tuple(sorted(clusters_by_pair.get((a, b), ()))),
        ))
    return pairs


def _role_counts(mentions: Sequence[ConceptMention], concept_id: str) -> dict[str, int]:
    counts = Counter(m.role for m in mentions if m.concept_id == concept_id)
    return dict(counts)


def _interleave(first: Sequence[str], second: Sequence[str]) -> list[str]:
    out: list[str] = []
    for index in range(max(len(first), len(second))):
        if index < len(first):
            out.append(first[index])
        if index < len(second):
            out.append(second[index])
    return out


def build_evidence_packet(
    pair: CandidatePair,
    corpus: Corpus,
    mentions: Sequence[ConceptMention],
    first_intro: Mapping[str, tuple[int, int]],
    summaries: Sequence[ClusterSummary],
    max_evidence_chunks: int = DEFAULT_MAX_EVIDENCE_CHUNKS,
    max_clusters_per_pair: int = DEFAULT_MAX_CLUSTERS_PER_PAIR,
) -> EvidencePacket:
    """Assemble the roles, first-introduction data, and evidence for one pair."""
    chunks_of: dict[str, set[str]] = {}
    for mention in mentions:
        chunks_of.setdefault(mention.concept_id, set()).add(mention.chunk_id)

    co_occurring = [c for c in corpus.chunks
                    if c.chunk_id in chunks_of.get(pair.a, set())
                    and c.chunk_id in chunks_of.get(pair.b, set())]

    evidence_ids: list[str] = []
    source_cluster: int | None = None
    if co_occurring:
        mode = "chunk"
        evidence_ids = [c.chunk_id for c in co_occurring[:max_evidence_chunks]]
    elif pair.shared_clusters:
        mode = "cluster"
        by_label = {s.label: s for s in summaries}
        shared = [by_label[label] for label in pair.shared_clusters if label in by_label]
        # Largest membership first; lowest label wins ties.
        shared.sort(key=lambda s: (-len(s.member_chunk_ids), s.label))
        seen: set[str] = set()
        for summary in shared[:max_clusters_per_pair]:
            if source_cluster is None:
                source_cluster = summary.label
            reps_a = summary.representatives.get(pair.a, [])
            reps_b = summary.representatives.get(pair.b, [])
            for chunk_id in _interleave(reps_a, reps_b):
                if chunk_id in seen:
                    continue
                seen.add(chunk_id)
                evidence_ids.append(chunk_id)
                if len(evidence_ids) >= max_evidence_chunks:
                    break
            if len(evidence_ids) >= max_evidence_chunks:
                break
        evidence_ids = evidence_ids[:max_evidence_chunks]
    else:
        raise NoEvidence(f"pair ({pair.a}, {pair.b}) has no evidence")

    if not evidence_ids:
        raise NoEvidence(f"pair ({pair.a}, {pair.b}) selected no evidence chunks")

    evidence = tuple(
        EvidenceChunk(chunk_id=c.chunk_id, lecture_id=c.lecture_id,
                      page_numbers=c.page_numbers, text=c.text)
        for c in (corpus.chunk_map[chunk_id] for chunk_id in evidence_ids)
    )
    return EvidencePacket(
        pair=pair,
        roles_a=_role_counts(mentions, pair.a),
        roles_b=_role_counts(mentions, pair.b),
        first_a=tuple(first_intro[pair.a]),
        first_b=tuple(first_intro[pair.b]),
        evidence_mode=mode,
        evidence=evidence,
        source_cluster=source_cluster,
    )


def build_all_packets(pairs: Sequence[CandidatePair], corpus: Corpus,
                      mentions: Sequence[ConceptMention],
                      first_intro: Mapping[str, tuple[int, int]],
                      summaries: Sequence[ClusterSummary],
                      max_evidence_chunks: int = DEFAULT_MAX_EVIDENCE_CHUNKS,
                      max_clusters_per_pair: int = DEFAULT_MAX_CLUSTERS_PER_PAIR,
                      ) -> list[EvidencePacket]:
    return [build_evidence_packet(pair, corpus, mentions, first_intro, summaries,
                                  max_evidence_chunks, max_clusters_per_pair)
            for pair in pairs]


def packets_to_rows(packets: Sequence[EvidencePacket]) -> list[dict]:
    return [
        {"a": p.pair.a, "b": p.pair.b,
         "display_a": p.pair.display_a, "display_b": p.pair.display_b,
         "has_chunk_cooccurrence": p.pair.has_chunk_cooccurrence,
         "shared_clusters": list(p.pair.shared_clusters),
         "mode": p.evidence_mode,
         "source_cluster": p.source_cluster,
         "evidence_chunk_ids": [e.chunk_id for e in p.evidence],
         "evidence": [
             {"chunk_id": e.chunk_id, "lecture_id": e.lecture_id,
              "page_numbers": list(e.page_numbers), "text": e.text}
             for e in p.evidence
         ],
         "roles_a": dict(p.roles_a), "roles_b": dict(p.roles_b),
         "first_a": list(p.first_a), "first_b": list(p.first_b)}
        for p in packets
    ]


def packets_from_rows(rows: Sequence[dict]) -> list[EvidencePacket]:
    packets = []
    for row in rows:
        pair = CandidatePair(
            a=row["a"], b=row["b"],
            display_a=row["display_a"], display_b=row["display_b"],
            has_chunk_cooccurrence=row["has_chunk_cooccurrence"],
            shared_clusters=tuple(row["shared_clusters"]),
        )
        evidence = tuple(
            EvidenceChunk(chunk_id=e["chunk_id"], lecture_id=e["lecture_id"],
                          page_numbers=tuple(e["page_numbers"]), text=e["text"])
            for e in row["evidence"]
        )
        packets.append(EvidencePacket(
            pair=pair,
            roles_a={k: int(v) for k, v in row["roles_a"].items()},
            roles_b={k: int(v) for k, v in row["roles_b"].items()},
            first_a=(row["first_a"][0], row["first_a"][1]),
            first_b=(row["first_b"][0], row["first_b"][1]),
            evidence_mode=row["mode"],
            evidence=evidence,
            source_cluster=row["source_cluster"],
        ))
    return packets
