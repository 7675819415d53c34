"""Embed chunks, assign cluster labels with a noise class, summarize clusters.

Two interchangeable clusterers satisfy the same contract (integer labels
with -1 reserved for noise):

* ``density``: the reference configuration, cosine-metric dimensionality
  reduction to ``n_components`` followed by HDBSCAN with
  ``min_cluster_size``. UMAP is used for the reduction when installed,
  otherwise PCA over the unit-norm embeddings.
* ``threshold``: deterministic fallback, connected components of the
  cosine-similarity graph at threshold tau, with components smaller than
  ``min_cluster_size`` relabeled -1. This one powers the test oracles.

Too few points for the reducer falls back to the threshold clusterer.
Cluster centroids are computed from the original (pre-reduction) unit
embeddings; per-concept representatives rank member chunks by cosine
similarity to the centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import TooFewPoints
from .gateway import Gateway
from .ingest import Corpus
from .storage import canonical_json, sha256_text

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    method: str = "density"            # density | threshold | none
    fallback_threshold: float = 0.8    # tau for the threshold clusterer
    min_cluster_size: int = 5
    n_components: int = 15
    n_neighbors: int = 15

    def fingerprint(self) -> str:
        return sha256_text(canonical_json({
            "method": self.method,
            "fallback_threshold": self.fallback_threshold,
            "min_cluster_size": self.min_cluster_size,
            "n_components": self.n_components,
            "n_neighbors": self.n_neighbors,
        }))

    def seed(self) -> int:
        # Stochastic reducers are seeded from the params fingerprint.
        return int(self.fingerprint()[:8], 16)


@dataclass(frozen=True)
class ClusterAssignment:
    labels: dict[str, int]
    k: int
    params_fingerprint: str


@dataclass
class ClusterSummary:
    label: int
    centroid: np.ndarray = field(repr=False)
    member_chunk_ids: list[str]
    concept_ids: tuple[str, ...]
    representatives: dict[str, list[str]]


def embed_corpus(corpus: Corpus, gateway: Gateway) -> dict[str, np.ndarray]:
    """One unit vector per chunk, keyed by chunk_id in corpus order."""
    if not corpus.chunks:
        raise ValueError("corpus has no chunks")
    vectors = gateway.embed_texts([c.text for c in corpus.chunks])
    return {c.chunk_id: v for c, v in zip(corpus.chunks, vectors)}


def _relabel_in_first_member_order(ids: Sequence[str], raw_labels: Sequence[int]) -> dict[str, int]:
    """Renumber non-noise labels by order of first appearance; noise stays -1."""
    mapping: dict[int, int] = {}
    labels: dict[str, int] = {}
    for chunk_id, raw in zip(ids, raw_labels):
        if raw == NOISE:
            labels[chunk_id] = NOISE
            continue
        if raw not in mapping:
            mapping[raw] = len(mapping)
        labels[chunk_id] = mapping[raw]
    return labels


def threshold_clusters(embeddings: Mapping[str, np.ndarray], tau: float,
                       min_cluster_size: int) -> dict[str, int]:
    """Connected components of the cosine graph at tau; small ones are noise."""
    ids = list(embeddings)
    matrix = np.stack([embeddings[i] for i in ids])
    similarity = matrix @ matrix.T
    n = len(ids)

    component = [-1] * n
    components: list[list[int]] = []
    for start in range(n):
        if component[start] != -1:
            continue
        index = len(components)
        members = []
        stack = [start]
        component[start] = index
        while stack:
            node = stack.pop()
            members.append(node)
            for other in range(n):
                if component[other] == -1 and similarity[node, other] >= tau:
                    component[other] = index
                    stack.append(other)
        components.append(sorted(members))

    raw = [-1] * n
    for index, members in enumerate(components):
        label = index if len(members) >= min_cluster_size else NOISE
        for member in members:
            raw[member] = label
    return _relabel_in_first_member_order(ids, raw)


def _reduce(matrix: np.ndarray, params: ClusterParams) -> np.ndarray:
    try:
        import umap  # optional; cosine-metric reduction when available

        reducer = umap.UMAP(n_components=params.n_components,
                            n_neighbors=params.n_neighbors,
                            metric="cosine", random_state=params.seed())
        return reducer.fit_transform(matrix)
    except ImportError:
        from sklearn.decomposition import PCA

        reducer = PCA(n_components=params.n_components, random_state=params.seed())
        return reducer.fit_transform(matrix)


def density_clusters(embeddings: Mapping[str, np.ndarray],
                     params: ClusterParams) -> dict[str, int]:
    ids = list(embeddings)
    if len(ids) <= max(params.n_components, params.n_neighbors):
        raise TooFewPoints(
            f"{len(ids)} points; reducer requires more than "
            f"{max(params.n_components, params.n_neighbors)}")
    from sklearn.cluster import HDBSCAN

    matrix = np.stack([embeddings[i] for i in ids])
    reduced = _reduce(matrix, params)
    raw = HDBSCAN(min_cluster_size=params.min_cluster_size).fit_predict(reduced)
    return _relabel_in_first_member_order(ids, [int(l) for l in raw])


def cluster_chunks(embeddings: Mapping[str, np.ndarray],
                   params: ClusterParams) -> ClusterAssignment:
    """Assign every chunk a label in {-1, 0, ..., k-1}."""
    if not embeddings:
        raise ValueError("no embeddings to cluster")
    if params.method == "none":
        labels = {chunk_id: NOISE for chunk_id in embeddings}
    elif params.method == "threshold":
        labels = threshold_clusters(embeddings, params.fallback_threshold,
                                    params.min_cluster_size)
    elif params.method == "density":
        try:
            labels = density_clusters(embeddings, params)
        except TooFewPoints:
            labels = threshold_clusters(embeddings, params.fallback_threshold,
                                        params.min_cluster_size)
    else:
        raise ValueError(f"unknown clusterer {params.method!r}")
    k = len({label for label in labels.values() if label != NOISE})
    return ClusterAssignment(labels=labels, k=k,
                             params_fingerprint=params.fingerprint())


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    denominator = float(np.linalg.norm(u)) * float(np.linalg.norm(v))
    if denominator == 0.0:
        return 0.0
    return float(np.dot(u, v)) / denominator


def summarize_clusters(assignment: ClusterAssignment,
                       embeddings: Mapping[str, np.ndarray],
                       mentions: Sequence,
                       max_representatives: int = 3) -> list[ClusterSummary]:
    """One summary per non-noise label; noise chunks appear in no summary.

    The centroid is the arithmetic mean of member embeddings. For each
    concept in the cluster, ``representatives`` lists the member chunks that
    mention it, sorted by descending cosine to the centroid (ties break in
    corpus order), truncated to ``max_representatives``.
    """
    concepts_by_chunk: dict[str, set[str]] = {}
    for mention in mentions:
        concepts_by_chunk.setdefault(mention.chunk_id, set()).add(mention.concept_id)

    members_by_label: dict[int, list[str]] = {}
    for chunk_id in embeddings:
        label = assignment.labels[chunk_id]
        if label == NOISE:
            continue
        members_by_label.setdefault(label, []).append(chunk_id)

    summaries = []
    for label in sorted(members_by_label):
        members = members_by_label[label]
        centroid = np.mean([embeddings[m] for m in members], axis=0)
        ranked = sorted(
            range(len(members)),
            key=lambda position: (-cosine(embeddings[members[position]], centroid),
                                  position))
        ranked_ids = [members[position] for position in ranked]
        concept_ids = sorted(set().union(
            *(concepts_by_chunk.get(m, set()) for m in members)))
        representatives = {}
        for concept_id in concept_ids:
            mentioning = [chunk_id for chunk_id in ranked_ids
                          if concept_id in concepts_by_chunk.get(chunk_id, set())]
            representatives[concept_id] = mentioning[:max_representatives]
        summaries.append(ClusterSummary(
            label=label,
            centroid=centroid,
            member_chunk_ids=list(members),
            concept_ids=tuple(concept_ids),
            representatives=representatives,
        ))
    return summaries


def assignment_to_dict(assignment: ClusterAssignment, params: ClusterParams,
                       summaries: Sequence[ClusterSummary]) -> dict:
    return {
        "params": {
            "method": params.method,
            "fallback_threshold": params.fallback_threshold,
            "min_cluster_size": params.min_cluster_size,
            "n_components": params.n_components,
            "n_neighbors": params.n_neighbors,
            "fingerprint": assignment.params_fingerprint,
        },
        "k": assignment.k,
        "labels": dict(assignment.labels),
        "summaries": [
            {"label": s.label,
             "centroid": [float(x) for x in s.centroid],
             "member_chunk_ids": list(s.member_chunk_ids),
             "concept_ids": list(s.concept_ids),
             "representatives": {cid: list(chunks)
                                 for cid, chunks in sorted(s.representatives.items())}}
            for s in summaries
        ],
    }


def load_assignment(data: dict) -> tuple[ClusterAssignment, list[ClusterSummary]]:
    assignment = ClusterAssignment(
        labels={chunk_id: int(label) for chunk_id, label in data["labels"].items()},
        k=int(data["k"]),
        params_fingerprint=data["params"]["fingerprint"],
    )
    summaries = [
        ClusterSummary(
            label=int(row["label"]),
            centroid=np.asarray(row["centroid"], dtype=np.float64),
            member_chunk_ids=list(row["member_chunk_ids"]),
            concept_ids=tuple(row["concept_ids"]),
            representatives={cid: list(chunks)
                             for cid, chunks in row["representatives"].items()},
        )
        for row in data["summaries"]
    ]
    return assignment, summaries
