"""Relation judgment, knowledge-graph assembly, cycle handling, and export.

Each candidate pair is judged once with the relation prompt, A being the
alphabetically first concept; a null relation maps to ``none`` and emits no
edge. The optional ``swap_on_null`` pass re-judges null pairs with A and B
swapped and accepts a non-null answer with the reversed direction, since the
fixed A-to-B direction cannot otherwise express such relations.

Cycle enforcement repeatedly removes the lowest-confidence edge that
participates in a cycle (per relation type) until the graph is acyclic.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import networkx as nx

from .concepts import ConceptMention
from .errors import DuplicatePair, MalformedResponse, PipelineError, UnknownFormat
from .evidence import EvidencePacket
from .gateway import (CompletionRequest, Gateway,
                      DEFAULT_MAX_ATTEMPTS, DEFAULT_TEMPERATURE)
from .prompts import (render_evidence_block, render_mode_block,
                      render_relation_prompt, render_role_block,
                      render_temporal_block)
from .storage import canonical_json

RELATIONS = ("depends_on", "part_of")
NO_RELATION = "none"
DEFAULT_RELATION_BATCH = 8
FALLBACK_CONFIDENCE = 0.5


@dataclass(frozen=True)
class EvidenceQuote:
    chunk_id: str
    lecture_id: str
    page_numbers: tuple[int, ...]
    quote: str


@dataclass(frozen=True)
class RelationJudgment:
    a: str                      # source concept id (direction as judged)
    b: str                      # target concept id
    relation: str               # depends_on | part_of | none
    confidence: float
    justification: str
    evidence_quotes: tuple[EvidenceQuote, ...]
    pair_key: tuple[str, str]   # alphabetical candidate key


def relation_request(packet: EvidencePacket, swapped: bool = False,
                     temperature: float = DEFAULT_TEMPERATURE,
                     max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> CompletionRequest:
    pair = packet.pair
    if swapped:
        display_a, display_b = pair.display_b, pair.display_a
        roles_a, roles_b = packet.roles_b, packet.roles_a
        first_a, first_b = packet.first_b, packet.first_a
    else:
        display_a, display_b = pair.display_a, pair.display_b
        roles_a, roles_b = packet.roles_a, packet.roles_b
        first_a, first_b = packet.first_a, packet.first_b
    prompt = render_relation_prompt(
        a_display=display_a,
        b_display=display_b,
        role_block=render_role_block(display_a, roles_a, display_b, roles_b),
        temporal_block=render_temporal_block(first_a, first_b),
        mode_block=render_mode_block(packet.evidence_mode, packet.source_cluster),
        evidence_block=render_evidence_block(packet.evidence),
    )
    suffix = ":swapped" if swapped else ""
    return CompletionRequest(
        request_id=f"relation:{pair.a}__{pair.b}{suffix}",
        system_prompt="",
        user_prompt=prompt,
        temperature=temperature,
        max_attempts=max_attempts,
    )


def _parse_quotes(raw_evidence, packet: EvidencePacket) -> tuple[EvidenceQuote, ...]:
    """Keep only quotes that are exact substrings of the cited evidence chunk."""
    chunks = {e.chunk_id: e for e in packet.evidence}
    quotes = []
    if not isinstance(raw_evidence, list):
        return ()
    for item in raw_evidence:
        if not isinstance(item, dict):
            continue
        chunk_id = item.get("chunk_id")
        chunk = chunks.get(chunk_id) if isinstance(chunk_id, str) else None
        quote = item.get("quote")
        if chunk is None or not isinstance(quote, str) or not quote:
            continue
        if quote not in chunk.text:
            continue
        quotes.append(EvidenceQuote(chunk_id=chunk.chunk_id,
                                    lecture_id=chunk.lecture_id,
                                    page_numbers=chunk.page_numbers,
                                    quote=quote))
    return tuple(quotes)


def parse_judgment(value: dict, packet: EvidencePacket,
                   swapped: bool = False) -> RelationJudgment:
    pair = packet.pair
    source, target = (pair.b, pair.a) if swapped else (pair.a, pair.b)

    raw_relation = value.get("relation")
    if raw_relation is None:
        relation = NO_RELATION
    else:
        candidate = str(raw_relation).strip().lower()
        relation = candidate if candidate in RELATIONS else NO_RELATION

    try:
        confidence = float(value.get("confidence"))
    except (TypeError, ValueError):
        confidence = FALLBACK_CONFIDENCE if relation != NO_RELATION else 0.0
    confidence = min(1.0, max(0.0, confidence))

    justification = value.get("justification")
    justification = justification.strip() if isinstance(justification, str) else ""
    if relation != NO_RELATION and not justification:
        justification = "model returned no justification"

    return RelationJudgment(
        a=source, b=target, relation=relation, confidence=confidence,
        justification=justification,
        evidence_quotes=_parse_quotes(value.get("evidence"), packet),
        pair_key=pair.key,
    )


def _failed_judgment(packet: EvidencePacket, error: PipelineError) -> RelationJudgment:
    return RelationJudgment(
        a=packet.pair.a, b=packet.pair.b, relation=NO_RELATION, confidence=0.0,
        justification=f"judgment unavailable: {error}",
        evidence_quotes=(), pair_key=packet.pair.key,
    )


def judge_relation(packet: EvidencePacket, gateway: Gateway,
                   swap_on_null: bool = False,
                   temperature: float = DEFAULT_TEMPERATURE,
                   max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> RelationJudgment:
    """Judge one pair; malformed responses record a none judgment."""
    try:
        result = gateway.complete_json(relation_request(packet, False,
                                                        temperature, max_attempts))
        judgment = parse_judgment(result.value, packet)
    except MalformedResponse as exc:
        judgment = _failed_judgment(packet, exc)
    if judgment.relation != NO_RELATION or not swap_on_null:
        return judgment
    try:
        result = gateway.complete_json(relation_request(packet, True,
                                                        temperature, max_attempts))
        swapped = parse_judgment(result.value, packet, swapped=True)
    except MalformedResponse:
        return judgment
    return swapped if swapped.relation != NO_RELATION else judgment


def judge_pairs(packets: Sequence[EvidencePacket], gateway: Gateway,
                swap_on_null: bool = False,
                relation_batch: int = DEFAULT_RELATION_BATCH,
                temperature: float = DEFAULT_TEMPERATURE,
                max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> list[RelationJudgment]:
    """Judge all pairs, dispatched in windows of ``relation_batch``."""
    judgments: list[RelationJudgment | None] = [None] * len(packets)

    def dispatch(batch: list[tuple[int, EvidencePacket, bool]]):
        requests = [relation_request(p, swapped, temperature, max_attempts)
                    for _, p, swapped in batch]
        results = gateway.run_batch(requests)
        for (position, packet, swapped), result in zip(batch, results):
            if isinstance(result, MalformedResponse):
                parsed = _failed_judgment(packet, result)
            elif isinstance(result, PipelineError):
                raise result
            else:
                parsed = parse_judgment(result.value, packet, swapped=swapped)
            if swapped and parsed.relation == NO_RELATION:
                continue  # keep the original none judgment
            judgments[position] = parsed

    work = [(i, p, False) for i, p in enumerate(packets)]
    for start in range(0, len(work), relation_batch):
        dispatch(work[start:start + relation_batch])

    if swap_on_null:
        retries = [(i, packets[i], True) for i, j in enumerate(judgments)
                   if j is not None and j.relation == NO_RELATION]
        for start in range(0, len(retries), relation_batch):
            dispatch(retries[start:start + relation_batch])

    return [j for j in judgments if j is not None]


@dataclass(frozen=True)
class GraphNode:
    concept_id: str
    display: str
    first_introduction: tuple[int, int] | None


@dataclass(frozen=True)
class GraphEdge:
    source: str
    target: str
    relation: str
    confidence: float
    justification: str
    evidence: tuple[EvidenceQuote, ...]


@dataclass(frozen=True)
class KnowledgeGraph:
    nodes: dict[str, GraphNode]
    edges: tuple[GraphEdge, ...]


def assemble_graph(judgments: Sequence[RelationJudgment],
                   mentions: Sequence[ConceptMention]) -> KnowledgeGraph:
    """Collect non-none judgments as edges over all mentioned concepts."""
    first: dict[str, tuple[int, int]] = {}
    display: dict[str, str] = {}
    for mention in mentions:
        display.setdefault(mention.concept_id, mention.display)
        coordinate = (mention.lecture_index, mention.chunk_index)
        if mention.concept_id not in first or coordinate < first[mention.concept_id]:
            first[mention.concept_id] = coordinate

    nodes = {cid: GraphNode(concept_id=cid, display=display[cid],
                            first_introduction=first.get(cid))
             for cid in sorted(display)}

    seen_pairs: set[tuple[str, str]] = set()
    edges = []
    for judgment in judgments:
        if judgment.pair_key in seen_pairs:
            raise DuplicatePair(f"pair {judgment.pair_key} judged twice")
        seen_pairs.add(judgment.pair_key)
        if judgment.relation == NO_RELATION:
            continue
        for endpoint in (judgment.a, judgment.b):
            if endpoint not in nodes:
                raise ValueError(f"edge endpoint {endpoint} has no mention")
        edges.append(GraphEdge(
            source=judgment.a, target=judgment.b, relation=judgment.relation,
            confidence=judgment.confidence, justification=judgment.justification,
            evidence=judgment.evidence_quotes,
        ))
    edges.sort(key=lambda e: (min(e.source, e.target), max(e.source, e.target)))
    return KnowledgeGraph(nodes=nodes, edges=tuple(edges))


def _relation_digraph(graph: KnowledgeGraph, relation: str) -> nx.DiGraph:
    digraph = nx.DiGraph()
    digraph.add_nodes_from(graph.nodes)
    digraph.add_edges_from((e.source, e.target) for e in graph.edges
                           if e.relation == relation)
    return digraph


def detect_cycles(graph: KnowledgeGraph) -> dict[str, list[list[str]]]:
    """All directed cycles per relation type, deterministically ordered."""
    report: dict[str, list[list[str]]] = {}
    for relation in RELATIONS:
        cycles = []
        for cycle in nx.simple_cycles(_relation_digraph(graph, relation)):
            pivot = cycle.index(min(cycle))
            cycles.append(cycle[pivot:] + cycle[:pivot])
        report[relation] = sorted(cycles)
    return report


def check_acyclicity(graph: KnowledgeGraph, mode: str = "report"):
    """Report all per-relation cycles, or enforce acyclicity by pruning.

    ``report`` returns ``{relation: [cycles...]}``; ``enforce`` returns the
    pruned graph plus the removed edges.
    """
    if mode == "report":
        return detect_cycles(graph)
    if mode == "enforce":
        return enforce_dag(graph)
    raise ValueError(f"unknown acyclicity mode {mode!r}")


def enforce_dag(graph: KnowledgeGraph) -> tuple[KnowledgeGraph, list[GraphEdge]]:
    """Remove lowest-confidence cycle-participating edges until acyclic.

    An edge participates in a cycle exactly when both endpoints sit in the
    same nontrivial strongly connected component of its relation subgraph.
    """
    edges = list(graph.edges)
    removed = []
    for relation in RELATIONS:
        while True:
            digraph = nx.DiGraph()
            digraph.add_edges_from((e.source, e.target) for e in edges
                                   if e.relation == relation)
            on_cycle = set()
            for component in nx.strongly_connected_components(digraph):
                if len(component) > 1:
                    on_cycle.update(
                        (e.source, e.target) for e in edges
                        if e.relation == relation
                        and e.source in component and e.target in component)
            if not on_cycle:
                break
            victim = min((e for e in edges
                          if e.relation == relation and (e.source, e.target) in on_cycle),
                         key=lambda e: (e.confidence, e.source, e.target))
            edges.remove(victim)
            removed.append(victim)
    return replace(graph, edges=tuple(edges)), removed


def graph_to_dict(graph: KnowledgeGraph) -> dict:
    return {
        "nodes": [
            {"concept_id": node.concept_id, "display": node.display,
             "first_introduction": (list(node.first_introduction)
                                    if node.first_introduction is not None else None)}
            for _, node in sorted(graph.nodes.items())
        ],
        "edges": [
            {"source": e.source, "target": e.target, "relation": e.relation,
             "confidence": e.confidence, "justification": e.justification,
             "evidence": [
                 {"chunk_id": q.chunk_id, "lecture_id": q.lecture_id,
                  "page_numbers": list(q.page_numbers), "quote": q.quote}
                 for q in e.evidence
             ]}
            for e in sorted(graph.edges, key=lambda e: (e.source, e.target, e.relation))
        ],
    }


def graph_from_dict(data: dict) -> KnowledgeGraph:
    nodes = {
        row["concept_id"]: GraphNode(
            concept_id=row["concept_id"], display=row["display"],
            first_introduction=(tuple(row["first_introduction"])
                                if row["first_introduction"] is not None else None))
        for row in data["nodes"]
    }
    edges = tuple(
        GraphEdge(
            source=row["source"], target=row["target"], relation=row["relation"],
            confidence=row["confidence"], justification=row["justification"],
            evidence=tuple(
                EvidenceQuote(chunk_id=q["chunk_id"], lecture_id=q["lecture_id"],
                              page_numbers=tuple(q["page_numbers"]), quote=q["quote"])
                for q in row["evidence"]
            ))
        for row in data["edges"]
    )
    return KnowledgeGraph(nodes=nodes, edges=edges)


def judgments_to_rows(judgments: Sequence[RelationJudgment]) -> list[dict]:
    return [
        {"a": j.a, "b": j.b, "relation": j.relation, "confidence": j.confidence,
         "justification": j.justification,
         "pair_key": list(j.pair_key),
         "evidence": [
             {"chunk_id": q.chunk_id, "lecture_id": q.lecture_id,
              "page_numbers": list(q.page_numbers), "quote": q.quote}
             for q in j.evidence_quotes
         ]}
        for j in judgments
    ]


def judgments_from_rows(rows: Sequence[dict]) -> list[RelationJudgment]:
    return [
        RelationJudgment(
            a=row["a"], b=row["b"], relation=row["relation"],
            confidence=row["confidence"], justification=row["justification"],
            evidence_quotes=tuple(
                EvidenceQuote(chunk_id=q["chunk_id"], lecture_id=q["lecture_id"],
                              page_numbers=tuple(q["page_numbers"]), quote=q["quote"])
                for q in row["evidence"]
            ),
            pair_key=(row["pair_key"][0], row["pair_key"][1]),
        )
        for row in rows
    ]


_DOT_STYLES = {"depends_on": "solid", "part_of": "dashed"}


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_graph(graph: KnowledgeGraph, format: str = "json") -> bytes:
    """Serialize the graph; json is the canonical artifact, dot is for viewing."""
    if format == "json":
        return canonical_json(graph_to_dict(graph)).encode("utf-8")
    if format == "dot":
        lines = ["digraph coursegraph {"]
        for concept_id, node in sorted(graph.nodes.items()):
            lines.append(f'  "{_dot_escape(concept_id)}" '
                         f'[label="{_dot_escape(node.display)}"];')
        for edge in sorted(graph.edges, key=lambda e: (e.source, e.target, e.relation)):
            style = _DOT_STYLES[edge.relation]
            label = f"{edge.relation} ({edge.confidence:.2f})"
            lines.append(f'  "{_dot_escape(edge.source)}" -> "{_dot_escape(edge.target)}" '
                         f'[label="{label}", style={style}];')
        lines.append("}")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise UnknownFormat(f"unknown export format {format!r}")
