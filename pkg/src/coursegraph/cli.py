"""Command-line entry point wiring all pipeline phases.

Each subcommand reads and writes plain-JSON artifacts; ``run`` executes the
whole pipeline with fingerprint-based resumability. Exit code 0 on success,
nonzero with the failing phase named on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import clustering, concepts, evaluation, evidence, ingest, relations, students
from .config import PipelineConfig
from .errors import PipelineError
from .gateway import build_gateway
from .pipeline import run_pipeline
from .storage import dump_json, load_json


def _config_from_args(args) -> PipelineConfig:
    config = (PipelineConfig.from_file(args.config)
              if getattr(args, "config", None) else PipelineConfig())
    for flag in ("no_roles", "no_clustering", "swap_on_null", "enforce_dag"):
        if getattr(args, flag, False):
            setattr(config, flag, True)
    for option in ("backend", "model", "stub_fixtures", "course_name"):
        value = getattr(args, option, None)
        if value:
            setattr(config, option, value)
    if getattr(args, "max_tokens", None) is not None:
        config.max_tokens = args.max_tokens
    if getattr(args, "merge_peers", None) is not None:
        config.merge_peers = args.merge_peers
    if getattr(args, "fallback_threshold", None) is not None:
        config.fallback_threshold = args.fallback_threshold
    config.validate()
    return config


def _add_common(parser: argparse.ArgumentParser, *, gateway: bool = False) -> None:
    parser.add_argument("--config", help="flat key-value config file")
    if gateway:
        parser.add_argument("--backend", choices=("stub", "openai"))
        parser.add_argument("--model")
        parser.add_argument("--stub-fixtures", dest="stub_fixtures",
                            help="fixture file for the stub backend")


def _cmd_ingest(args) -> int:
    config = _config_from_args(args)
    corpus = ingest.build_corpus(ingest.discover_documents(args.input),
                                 max_tokens=config.max_tokens,
                                 merge_peers=config.merge_peers)
    dump_json(corpus.to_dict(), args.out)
    print(f"ingest: {len(corpus.chunks)} chunks from {len(corpus.lectures)} lectures")
    return 0


def _cmd_extract(args) -> int:
    config = _config_from_args(args)
    gateway = build_gateway(config)
    corpus = ingest.Corpus.from_dict(load_json(args.chunks))
    mentions, first_intro = concepts.mine_concepts(
        corpus, gateway, no_roles=config.no_roles,
        temperature=config.temperature, max_attempts=config.max_attempts)
    dump_json(concepts.mentions_to_rows(mentions), args.out)
    first_intro_out = args.first_intro_out or str(Path(args.out).parent / "first_intro.json")
    dump_json(concepts.first_intro_to_dict(first_intro), first_intro_out)
    print(f"extract: {len(mentions)} mentions, {len(first_intro)} concepts")
    return 0


def _cmd_cluster(args) -> int:
    config = _config_from_args(args)
    gateway = build_gateway(config)
    corpus = ingest.Corpus.from_dict(load_json(args.chunks))
    mentions = concepts.mentions_from_rows(load_json(args.mentions))
    embeddings = clustering.embed_corpus(corpus, gateway)
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
    dump_json(clustering.assignment_to_dict(assignment, params, summaries), args.out)
    print(f"cluster: {assignment.k} clusters")
    return 0


def _cmd_pairs(args) -> int:
    config = _config_from_args(args)
    corpus = ingest.Corpus.from_dict(load_json(args.chunks))
    mentions = concepts.mentions_from_rows(load_json(args.mentions))
    first_intro = concepts.first_intro_from_dict(load_json(args.first_intro))
    assignment, summaries = clustering.load_assignment(load_json(args.clusters))
    pairs = evidence.generate_candidate_pairs(mentions, assignment)
    packets = evidence.build_all_packets(
        pairs, corpus, mentions, first_intro, summaries,
        max_evidence_chunks=config.max_evidence_chunks,
        max_clusters_per_pair=config.max_clusters_per_pair)
    dump_json(evidence.packets_to_rows(packets), args.out)
    print(f"pairs: {len(packets)} candidate pairs")
    return 0


def _cmd_judge(args) -> int:
    config = _config_from_args(args)
    gateway = build_gateway(config)
    packets = evidence.packets_from_rows(load_json(args.pairs))
    judgments = relations.judge_pairs(
        packets, gateway, swap_on_null=config.swap_on_null,
        relation_batch=config.relation_batch,
        temperature=config.temperature, max_attempts=config.max_attempts)
    dump_json(relations.judgments_to_rows(judgments), args.out)
    edges = sum(1 for j in judgments if j.relation != relations.NO_RELATION)
    print(f"judge: {edges} edges from {len(judgments)} pairs")
    return 0


def _cmd_build(args) -> int:
    config = _config_from_args(args)
    judgments = relations.judgments_from_rows(load_json(args.edges))
    mentions = concepts.mentions_from_rows(load_json(args.mentions))
    graph = relations.assemble_graph(judgments, mentions)
    if config.enforce_dag:
        graph, removed = relations.enforce_dag(graph)
        if removed:
            print(f"build: removed {len(removed)} cycle edges")
    dump_json(relations.graph_to_dict(graph), args.out)
    print(f"build: {len(graph.nodes)} nodes, {len(graph.edges)} edges")
    return 0


def _cmd_export(args) -> int:
    graph = relations.graph_from_dict(load_json(args.graph))
    payload = relations.export_graph(graph, format=args.format)
    if args.out:
        Path(args.out).write_bytes(payload)
    else:
        sys.stdout.write(payload.decode("utf-8"))
    return 0


def _eval_common(args, scorer) -> int:
    config = _config_from_args(args)
    gateway = build_gateway(config)
    graph = relations.graph_from_dict(load_json(args.graph))
    corpus = ingest.Corpus.from_dict(load_json(args.chunks))
    embeddings = clustering.embed_corpus(corpus, gateway)
    scores = scorer(graph, corpus, embeddings, gateway, config)
    dump_json(evaluation.scores_to_report_dict(scores), args.out)
    report = evaluation.aggregate_scores(scores)
    print(f"eval: mean={report.mean:.4f} std={report.std:.4f} n={report.count}")
    return 0


def _cmd_eval_nodes(args) -> int:
    return _eval_common(args, lambda graph, corpus, emb, gw, cfg:
                        evaluation.evaluate_nodes(graph, corpus, emb, gw,
                                                  cfg.course_name, k=cfg.excerpt_k,
                                                  max_chars=cfg.excerpt_chars,
                                                  temperature=cfg.temperature,
                                                  max_attempts=cfg.max_attempts))


def _cmd_eval_triplets(args) -> int:
    return _eval_common(args, lambda graph, corpus, emb, gw, cfg:
                        evaluation.evaluate_triplets(graph, corpus, emb, gw,
                                                     cfg.course_name, k=cfg.excerpt_k,
                                                     max_chars=cfg.excerpt_chars,
                                                     temperature=cfg.temperature,
                                                     max_attempts=cfg.max_attempts))


def _cmd_map_students(args) -> int:
    config = _config_from_args(args)
    gateway = build_gateway(config)
    graph = relations.graph_from_dict(load_json(args.graph))
    questions = load_json(args.questions)
    submissions = load_json(args.submissions)
    reports = students.map_student_errors(
        questions, submissions, graph, gateway,
        pool_size=config.candidate_pool, min_confidence=config.min_confidence,
        depth=config.trace_depth,
        temperature=config.temperature, max_attempts=config.max_attempts)
    dump_json(reports, args.out)
    print(f"map-students: {len(reports)} gap reports")
    return 0


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    manifest = run_pipeline(config, args.input, args.out_dir)
    print(f"run: {len(manifest['phases'])} phases complete in {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coursegraph",
        description="Build and evaluate concept knowledge graphs from lecture materials.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="order, convert, and chunk lecture documents")
    p.add_argument("--input", required=True, help="directory of lecture files")
    p.add_argument("--max-tokens", type=int, default=None)
    p.add_argument("--merge-peers", action="store_true", default=None)
    p.add_argument("--no-merge-peers", dest="merge_peers", action="store_false")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("extract", help="extract concepts and classify roles")
    p.add_argument("--chunks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--first-intro-out", dest="first_intro_out")
    p.add_argument("--no-roles", dest="no_roles", action="store_true")
    _add_common(p, gateway=True)
    p.set_defaults(fn=_cmd_extract)

    p = sub.add_parser("cluster", help="embed chunks and assign cluster labels")
    p.add_argument("--chunks", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fallback-threshold", dest="fallback_threshold", type=float)
    p.add_argument("--no-clustering", dest="no_clustering", action="store_true")
    _add_common(p, gateway=True)
    p.set_defaults(fn=_cmd_cluster)

    p = sub.add_parser("pairs", help="generate candidate pairs and evidence packets")
    p.add_argument("--chunks", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--first-intro", dest="first_intro", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(fn=_cmd_pairs)

    p = sub.add_parser("judge", help="judge candidate pair relations")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--swap-on-null", dest="swap_on_null", action="store_true")
    _add_common(p, gateway=True)
    p.set_defaults(fn=_cmd_judge)

    p = sub.add_parser("build", help="assemble the knowledge graph")
    p.add_argument("--edges", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--enforce-dag", dest="enforce_dag", action="store_true")
    _add_common(p)
    p.set_defaults(fn=_cmd_build)

    p = sub.add_parser("export", help="export the graph as json or dot")
    p.add_argument("--graph", required=True)
    p.add_argument("--format", choices=("json", "dot"), default="json")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_export)

    p = sub.add_parser("eval-nodes", help="judge node significance")
    p.add_argument("--graph", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--course", dest="course_name", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, gateway=True)
    p.set_defaults(fn=_cmd_eval_nodes)

    p = sub.add_parser("eval-triplets", help="judge triplet accuracy")
    p.add_argument("--graph", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--course", dest="course_name", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, gateway=True)
    p.set_defaults(fn=_cmd_eval_triplets)

    p = sub.add_parser("map-students", help="trace student errors to concept gaps")
    p.add_argument("--graph", required=True)
    p.add_argument("--questions", required=True)
    p.add_argument("--submissions", required=True)
    p.add_argument("--out", required=True)
    _add_common(p, gateway=True)
    p.set_defaults(fn=_cmd_map_students)

    p = sub.add_parser("run", help="run the full pipeline with resumability")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--no-roles", dest="no_roles", action="store_true")
    p.add_argument("--no-clustering", dest="no_clustering", action="store_true")
    p.add_argument("--swap-on-null", dest="swap_on_null", action="store_true")
    p.add_argument("--enforce-dag", dest="enforce_dag", action="store_true")
    _add_common(p, gateway=True)
    p.set_defaults(fn=_cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (PipelineError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
