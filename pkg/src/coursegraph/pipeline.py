"""Phase orchestration with per-phase artifacts and fingerprint resumability.

Phases run in order ingest, extract, cluster, pairs, judge, build. A phase
is skipped when its artifacts already exist with the recorded fingerprints
and neither its inputs nor its config slice changed; editing any upstream
artifact or input therefore reruns everything downstream. The manifest
carries no timestamps so reruns of identical inputs write identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable

from . import clustering, concepts, evidence, ingest, relations
from .config import PipelineConfig
from .errors import PhaseFailure
from .gateway import Gateway, build_gateway
from .storage import canonical_json, dump_json, load_json, sha256_file, sha256_text

PHASES = ("ingest", "extract", "cluster", "pairs", "judge", "build")

ARTIFACTS = {
    "ingest": ("chunks.json",),
    "extract": ("mentions.json", "first_intro.json"),
    "cluster": ("clusters.json",),
    "pairs": ("pairs.json",),
    "judge": ("edges.json",),
    "build": ("graph.json",),
}

# Config keys whose change invalidates each phase.
_PHASE_CONFIG_KEYS = {
    "ingest": ("max_tokens", "merge_peers"),
    "extract": ("no_roles", "temperature", "max_attempts", "concurrency",
                "backend", "model", "stub_fixtures"),
    "cluster": ("clusterer", "n_components", "n_neighbors", "min_cluster_size",
                "fallback_threshold", "no_clustering", "max_evidence_chunks",
                "embedding_backend", "embedding_model", "embedding_dim", "backend"),
    "pairs": ("max_evidence_chunks", "max_clusters_per_pair"),
    "judge": ("swap_on_null", "relation_batch", "temperature", "max_attempts",
              "concurrency", "backend", "model", "stub_fixtures"),
    "build": ("enforce_dag",),
}


def _inputs_fingerprint(input_dir: str) -> str:
    entries = [(Path(p).name, sha256_file(p))
               for p in ingest.discover_documents(input_dir)]
    return sha256_text(canonical_json(entries))


def _config_fingerprint(config: PipelineConfig, phase: str) -> str:
    subset = {key: getattr(config, key) for key in _PHASE_CONFIG_KEYS[phase]}
    return sha256_text(canonical_json(subset))


class PipelineRunner:
    def __init__(self, config: PipelineConfig, input_dir: str, out_dir: str,
                 gateway: Gateway | None = None):
        self.config = config
        self.input_dir = input_dir
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.gateway = gateway or build_gateway(config)
        self.manifest_path = self.out / "manifest.json"
        self.previous = (load_json(self.manifest_path)
                         if self.manifest_path.exists() else {"phases": {}})
        self.manifest: dict = {"phases": {}}

    def artifact(self, name: str) -> Path:
        return self.out / name

    def _artifact_hashes(self, phase: str) -> dict[str, str]:
        return {name: sha256_file(self.artifact(name)) for name in ARTIFACTS[phase]}

    def _run_phase(self, phase: str, input_files: tuple[str, ...],
                   extra_inputs: dict[str, str], fn: Callable[[], None]) -> None:
        inputs = dict(extra_inputs)
        for name in input_files:
            inputs[name] = sha256_file(self.artifact(name))
        entry = {"inputs": inputs, "config": _config_fingerprint(self.config, phase)}

        previous = self.previous["phases"].get(phase)
        outputs_exist = all(self.artifact(n).exists() for n in ARTIFACTS[phase])
        if (previous is not None and outputs_exist
                and previous.get("inputs") == entry["inputs"]
                and previous.get("config") == entry["config"]
                and previous.get("artifacts") == self._artifact_hashes(phase)):
            self.manifest["phases"][phase] = previous
            return

        try:
            fn()
        except Exception as exc:
            raise PhaseFailure(phase, exc) from exc
        entry["artifacts"] = self._artifact_hashes(phase)
        self.manifest["phases"][phase] = entry
        dump_json(self.manifest, self.manifest_path)

    def run(self) -> dict:
        config = self.config

        def do_ingest():
            corpus = ingest.build_corpus(
                ingest.discover_documents(self.input_dir),
                max_tokens=config.max_tokens, merge_peers=config.merge_peers)
            dump_json(corpus.to_dict(), self.artifact("chunks.json"))

        def do_extract():
            corpus = ingest.Corpus.from_dict(load_json(self.artifact("chunks.json")))
            mentions, first_intro = concepts.mine_concepts(
                corpus, self.gateway, no_roles=config.no_roles,
                temperature=config.temperature, max_attempts=config.max_attempts)
            dump_json(concepts.mentions_to_rows(mentions), self.artifact("mentions.json"))
            dump_json(concepts.first_intro_to_dict(first_intro),
                      self.artifact("first_intro.json"))

        def do_cluster():
            corpus = ingest.Corpus.from_dict(load_json(self.artifact("chunks.json")))
            mentions = concepts.mentions_from_rows(load_json(self.artifact("mentions.json")))
            embeddings = clustering.embed_corpus(corpus, self.gateway)
            params = clustering.ClusterParams(
                method="none" if config.no_clustering else config.clusterer,
                fallback_threshold=config.fallback_threshold,
                min_cluster_size=config.min_cluster_size,
                n_components=config.n_components,
                n_neighbors=config.n_neighbors)
            assignment = clustering.cluster_chunks(embeddings, params)
            summaries = clustering.summarize_clusters(
                assignment, embeddings, mentions,
                max_representatives=config.max_evidence_chunks)
            dump_json(clustering.assignment_to_dict(assignment, params, summaries),
                      self.artifact("clusters.json"))

        def do_pairs():
            corpus = ingest.Corpus.from_dict(load_json(self.artifact("chunks.json")))
            mentions = concepts.mentions_from_rows(load_json(self.artifact("mentions.json")))
            first_intro = concepts.first_intro_from_dict(
                load_json(self.artifact("first_intro.json")))
            assignment, summaries = clustering.load_assignment(
                load_json(self.artifact("clusters.json")))
            pairs = evidence.generate_candidate_pairs(mentions, assignment)
            packets = evidence.build_all_packets(
                pairs, corpus, mentions, first_intro, summaries,
                max_evidence_chunks=config.max_evidence_chunks,
                max_clusters_per_pair=config.max_clusters_per_pair)
            dump_json(evidence.packets_to_rows(packets), self.artifact("pairs.json"))

        def do_judge():
            packets = evidence.packets_from_rows(load_json(self.artifact("pairs.json")))
            judgments = relations.judge_pairs(
                packets, self.gateway, swap_on_null=config.swap_on_null,
                relation_batch=config.relation_batch,
                temperature=config.temperature, max_attempts=config.max_attempts)
            dump_json(relations.judgments_to_rows(judgments), self.artifact("edges.json"))

        def do_build():
            judgments = relations.judgments_from_rows(load_json(self.artifact("edges.json")))
            mentions = concepts.mentions_from_rows(load_json(self.artifact("mentions.json")))
            graph = relations.assemble_graph(judgments, mentions)
            if config.enforce_dag:
                graph, _removed = relations.enforce_dag(graph)
            dump_json(relations.graph_to_dict(graph), self.artifact("graph.json"))

        self._run_phase("ingest", (), {"input": _inputs_fingerprint(self.input_dir)},
                        do_ingest)
        self._run_phase("extract", ("chunks.json",), {}, do_extract)
        self._run_phase("cluster", ("chunks.json", "mentions.json"), {}, do_cluster)
        self._run_phase("pairs", ("chunks.json", "mentions.json", "first_intro.json",
                                  "clusters.json"), {}, do_pairs)
        self._run_phase("judge", ("pairs.json",), {}, do_judge)
        self._run_phase("build", ("edges.json", "mentions.json"), {}, do_build)

        dump_json(self.manifest, self.manifest_path)
        return self.manifest


def run_pipeline(config: PipelineConfig, input_dir: str, out_dir: str,
                 gateway: Gateway | None = None) -> dict:
    """Run every phase in order; returns the artifact manifest."""
    return PipelineRunner(config, input_dir, out_dir, gateway).run()
