from __future__ import annotations

import random
from itertools import combinations

import pytest

from coursegraph.clustering import ClusterAssignment, ClusterSummary
from coursegraph.concepts import ConceptMention
from coursegraph.errors import NoEvidence
from coursegraph.evidence import (CandidatePair, build_evidence_packet,
                                  generate_candidate_pairs, packets_from_rows,
                                  packets_to_rows)
from coursegraph.ingest import Chunk, Corpus, LectureSummary

import numpy as np


def _mention(concept_id: str, chunk_id: str, lecture_index: int = 0,
             chunk_index: int = 0, role: str = "NA") -> ConceptMention:
    return ConceptMention(concept_id=concept_id, display=concept_id.lower(),
                          chunk_id=chunk_id, lecture_id=chunk_id.rsplit("__", 1)[0],
                          lecture_index=lecture_index, chunk_index=chunk_index,
                          role=role, snippet="")


def _assignment(labels: dict[str, int]) -> ClusterAssignment:
    k = len({l for l in labels.values() if l != -1})
    return ClusterAssignment(labels=dict(labels), k=k, params_fingerprint="t")


def _corpus(chunk_ids: list[str]) -> Corpus:
    chunks = []
    for position, chunk_id in enumerate(chunk_ids):
        lecture_id, index = chunk_id.rsplit("__", 1)
        chunks.append(Chunk(chunk_id=chunk_id, lecture_id=lecture_id,
                            chunk_index=int(index), lecture_index=position,
                            page_numbers=(1,), text=f"text of {chunk_id}",
                            token_count=4))
    lectures = tuple(LectureSummary(c.lecture_id, f"{c.lecture_id}.txt",
                                    c.lecture_index, 1) for c in chunks)
    return Corpus(chunks=tuple(chunks), lectures=lectures, config_fingerprint="t")


def _summary(label: int, members: list[str],
             representatives: dict[str, list[str]]) -> ClusterSummary:
    concept_ids = tuple(sorted(representatives))
    return ClusterSummary(label=label, centroid=np.zeros(3),
                          member_chunk_ids=members, concept_ids=concept_ids,
                          representatives=representatives)


def test_pairs_chunk_and_cluster_sources() -> None:
    # c1={A,B}, c2={B,C}, both in cluster 0: brute-force over all concept
    # pairs gives (A,B) chunk, (B,C) chunk, (A,C) cluster-only.
    mentions = [_mention("A", "lec1__0"), _mention("B", "lec1__0"),
                _mention("B", "lec1__1"), _mention("C", "lec1__1")]
    assignment = _assignment({"lec1__0": 0, "lec1__1": 0})
    pairs = {p.key: p for p in generate_candidate_pairs(mentions, assignment)}
    assert set(pairs) == {("A", "B"), ("B", "C"), ("A", "C")}
    assert pairs[("A", "B")].has_chunk_cooccurrence
    assert pairs[("B", "C")].has_chunk_cooccurrence
    assert not pairs[("A", "C")].has_chunk_cooccurrence
    assert pairs[("A", "C")].shared_clusters == (0,)


def test_pairs_without_evidence_do_not_exist() -> None:
    mentions = [_mention("A", "lec1__0"), _mention("B", "lec1__1")]
    assignment = _assignment({"lec1__0": -1, "lec1__1": -1})
    assert generate_candidate_pairs(mentions, assignment) == []


def test_pairs_noise_cluster_confers_no_evidence() -> None:
    # Concepts sharing only a noise-labeled chunk's "cluster" pair up only if
    # they share the chunk itself.
    mentions = [_mention("A", "lec1__0"), _mention("B", "lec1__0"),
                _mention("C", "lec1__1")]
    assignment = _assignment({"lec1__0": -1, "lec1__1": -1})
    pairs = generate_candidate_pairs(mentions, assignment)
    assert [p.key for p in pairs] == [("A", "B")]


def test_pairs_normalized_alphabetically() -> None:
    mentions = [_mention("ZETA", "lec1__0"), _mention("ALPHA", "lec1__0")]
    assignment = _assignment({"lec1__0": -1})
    pairs = generate_candidate_pairs(mentions, assignment)
    assert pairs[0].a == "ALPHA" and pairs[0].b == "ZETA"


def test_pairs_match_brute_force_oracle_on_random_corpora() -> None:
    # Acceptance-grade oracle: for every unordered concept pair, the pair
    # exists iff some chunk mentions both or some non-noise cluster's concept
    # set contains both.
    rng = random.Random(1234)
    for _ in range(120):
        n_chunks = rng.randint(1, 15)
        n_concepts = rng.randint(1, 10)
        concepts = [f"C{i}" for i in range(n_concepts)]
        mentions = []
        concepts_by_chunk: dict[str, set[str]] = {}
        labels: dict[str, int] = {}
        for i in range(n_chunks):
            chunk_id = f"lec1__{i}"
            labels[chunk_id] = rng.choice([-1, -1, 0, 0, 1, 2])
            chosen = set(rng.sample(concepts, rng.randint(0, min(4, n_concepts))))
            concepts_by_chunk[chunk_id] = chosen
            for concept in chosen:
                mentions.append(_mention(concept, chunk_id, 0, i))

        got = {p.key: p for p in
               generate_candidate_pairs(mentions, _assignment(labels))}

        cluster_sets: dict[int, set[str]] = {}
        for chunk_id, label in labels.items():
            if label != -1:
                cluster_sets.setdefault(label, set()).update(
                    concepts_by_chunk[chunk_id])
        expected = {}
        for a, b in combinations(sorted(concepts), 2):
            chunk_hit = any(a in s and b in s for s in concepts_by_chunk.values())
            cluster_hit = any(a in s and b in s for s in cluster_sets.values())
            if chunk_hit or cluster_hit:
                expected[(a, b)] = (chunk_hit, cluster_hit)
        assert set(got) == set(expected)
        for key, (chunk_hit, cluster_hit) in expected.items():
            assert got[key].has_chunk_cooccurrence == chunk_hit
            assert bool(got[key].shared_clusters) == cluster_hit


def _pair(a: str, b: str, chunk: bool, clusters: tuple[int, ...]) -> CandidatePair:
    return CandidatePair(a=a, b=b, display_a=a.lower(), display_b=b.lower(),
                         has_chunk_cooccurrence=chunk, shared_clusters=clusters)


def test_packet_chunk_mode_truncates_in_corpus_order() -> None:
    chunk_ids = [f"lec1__{i}" for i in range(5)]
    corpus = _corpus(chunk_ids)
    mentions = []
    for i, chunk_id in enumerate(chunk_ids):
        mentions.append(_mention("A", chunk_id, 0, i))
        mentions.append(_mention("B", chunk_id, 0, i))
    first = {"A": (0, 0), "B": (0, 0)}
    packet = build_evidence_packet(_pair("A", "B", True, ()), corpus, mentions,
                                   first, [], max_evidence_chunks=3)
    assert packet.evidence_mode == "chunk"
    assert [e.chunk_id for e in packet.evidence] == ["lec1__0", "lec1__1", "lec1__2"]


def test_packet_cluster_mode_interleaves_a_first() -> None:
    corpus = _corpus(["lec1__7", "lec1__9"])
    mentions = [_mention("A", "lec1__7"), _mention("B", "lec1__9")]
    first = {"A": (0, 7), "B": (0, 9)}
    summary = _summary(0, ["lec1__7", "lec1__9"],
                       {"A": ["lec1__7"], "B": ["lec1__9"]})
    packet = build_evidence_packet(_pair("A", "B", False, (0,)), corpus, mentions,
                                   first, [summary])
    assert packet.evidence_mode == "cluster"
    assert packet.source_cluster == 0
    assert [e.chunk_id for e in packet.evidence] == ["lec1__7", "lec1__9"]


def test_packet_cluster_mode_deduplicates_keeping_first() -> None:
    # Overlapping representative lists cannot arise from a co-occurring chunk
    # (mode precedence would pick chunk mode), but duplicates are still
    # dropped keeping the first occurrence.
    corpus = _corpus(["lec1__0", "lec1__1"])
    mentions = [_mention("A", "lec1__0"), _mention("B", "lec1__1")]
    first = {"A": (0, 0), "B": (0, 1)}
    summary = _summary(0, ["lec1__0", "lec1__1"],
                       {"A": ["lec1__0", "lec1__1"], "B": ["lec1__1", "lec1__0"]})
    packet = build_evidence_packet(_pair("A", "B", False, (0,)), corpus, mentions,
                                   first, [summary])
    assert [e.chunk_id for e in packet.evidence] == ["lec1__0", "lec1__1"]


def test_packet_cluster_mode_prefers_largest_then_lowest_label() -> None:
    corpus = _corpus(["lec1__0", "lec1__1", "lec1__2", "lec1__3", "lec1__4"])
    mentions = [_mention("A", "lec1__0"), _mention("B", "lec1__2")]
    first = {"A": (0, 0), "B": (0, 2)}
    small = _summary(0, ["lec1__0", "lec1__2"],
                     {"A": ["lec1__0"], "B": ["lec1__2"]})
    large = _summary(1, ["lec1__1", "lec1__3", "lec1__4"],
                     {"A": ["lec1__1"], "B": ["lec1__3"]})
    packet = build_evidence_packet(_pair("A", "B", False, (0, 1)), corpus, mentions,
                                   first, [small, large])
    assert packet.source_cluster == 1
    assert [e.chunk_id for e in packet.evidence] == ["lec1__1", "lec1__3"]

    tied_a = _summary(0, ["lec1__0", "lec1__2"], {"A": ["lec1__0"], "B": ["lec1__2"]})
    tied_b = _summary(1, ["lec1__1", "lec1__3"], {"A": ["lec1__1"], "B": ["lec1__3"]})
    packet = build_evidence_packet(_pair("A", "B", False, (0, 1)), corpus, mentions,
                                   first, [tied_a, tied_b])
    assert packet.source_cluster == 0


def test_packet_roles_are_per_concept_multisets() -> None:
    corpus = _corpus(["lec1__0", "lec1__1"])
    mentions = [_mention("A", "lec1__0", role="Definition"),
                _mention("A", "lec1__1", role="Example"),
                _mention("B", "lec1__0", role="Assumption"),
                _mention("B", "lec1__1", role="Assumption")]
    first = {"A": (0, 0), "B": (0, 0)}
    packet = build_evidence_packet(_pair("A", "B", True, ()), corpus, mentions,
                                   first, [])
    assert packet.roles_a == {"Definition": 1, "Example": 1}
    assert packet.roles_b == {"Assumption": 2}


def test_packet_limits_never_exceeded_on_random_corpora() -> None:
    rng = random.Random(77)
    for _ in range(40):
        n_chunks = rng.randint(2, 12)
        chunk_ids = [f"lec1__{i}" for i in range(n_chunks)]
        corpus = _corpus(chunk_ids)
        concepts = ["A", "B", "C", "D"]
        mentions = []
        labels = {}
        for i, chunk_id in enumerate(chunk_ids):
            labels[chunk_id] = rng.choice([-1, 0, 0, 1])
            for concept in rng.sample(concepts, rng.randint(0, 3)):
                mentions.append(_mention(concept, chunk_id, 0, i))
        assignment = _assignment(labels)
        pairs = generate_candidate_pairs(mentions, assignment)
        if not pairs:
            continue
        members: dict[int, list[str]] = {}
        for chunk_id, label in labels.items():
            if label != -1:
                members.setdefault(label, []).append(chunk_id)
        chunk_concepts = {cid: {m.concept_id for m in mentions if m.chunk_id == cid}
                          for cid in chunk_ids}
        summaries = []
        for label, member_ids in sorted(members.items()):
            representatives = {}
            for concept in concepts:
                hits = [cid for cid in member_ids if concept in chunk_concepts[cid]]
                if hits:
                    representatives[concept] = hits[:3]
            summaries.append(_summary(label, member_ids, representatives))
        first = {c: (0, 0) for c in concepts}
        for pair in pairs:
            packet = build_evidence_packet(pair, corpus, mentions, first, summaries,
                                           max_evidence_chunks=3,
                                           max_clusters_per_pair=1)
            assert len(packet.evidence) <= 3
            if packet.evidence_mode == "cluster":
                assert packet.source_cluster in members
                member_set = set(members[packet.source_cluster])
                assert {e.chunk_id for e in packet.evidence} <= member_set
            else:
                for item in packet.evidence:
                    assert {pair.a, pair.b} <= chunk_concepts[item.chunk_id]


def test_packet_rows_round_trip() -> None:
    corpus = _corpus(["lec1__0"])
    mentions = [_mention("A", "lec1__0", role="Definition"),
                _mention("B", "lec1__0", role="Assumption")]
    first = {"A": (0, 0), "B": (0, 0)}
    packet = build_evidence_packet(_pair("A", "B", True, ()), corpus, mentions,
                                   first, [])
    restored = packets_from_rows(packets_to_rows([packet]))[0]
    assert restored == packet


def test_packet_without_evidence_raises() -> None:
    corpus = _corpus(["lec1__0"])
    with pytest.raises(NoEvidence):
        build_evidence_packet(_pair("A", "B", False, ()), corpus, [],
                              {"A": (0, 0), "B": (0, 0)}, [])
