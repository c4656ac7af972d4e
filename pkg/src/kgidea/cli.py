"""Command line entry point: build, merge, query, traverse, pipeline, ablate.

Data goes to files or standard output; logs go to standard error as JSON
lines.  Exit codes: 0 success, 1 stage or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .ablation import run_ablation, write_means_csv, write_scores_csv
from .agents import run_pipeline
from .building import build_graph, format_summary
from .config import (
    build_chat_backend,
    build_embedder,
    load_config,
    assemble_pipeline_config,
)
from .embedding import EmbeddingIndex
from .errors import KgError, ValidationError
from .graph import KnowledgeGraph
from .merging import MergePolicy, TIE_BREAKS, merge_pass
from .retrieval import ChunkStore, hybrid_evidence, retrieve_top_k
from .traversal import ALGORITHMS, TraversalOptions, traverse_all_pairs

logger = logging.getLogger(__name__)

_LOG_HANDLER: logging.Handler | None = None


class _JsonLineFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        out = {
            "level": record.levelname.lower(),
            "logger": record.name,
            "message": record.getMessage(),
        }
        return json.dumps(out, ensure_ascii=False)


def _configure_logging(level_name: str) -> None:
    global _LOG_HANDLER
    root = logging.getLogger()
    if _LOG_HANDLER is None:
        _LOG_HANDLER = logging.StreamHandler(sys.stderr)
        _LOG_HANDLER.setFormatter(_JsonLineFormatter())
        root.addHandler(_LOG_HANDLER)
    root.setLevel(getattr(logging, level_name.upper()))


def _emit(payload: dict, out_path: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cli_embedder(args) -> object:
    spec = {"mode": args.embedder}
    if args.embedder == "deterministic":
        spec["dim"] = args.dim
    return build_embedder(spec, args.seed)


# ----------------------------------------------------------------------
# subcommand handlers


def _cmd_build_graph(args) -> int:
    config = load_config(args.config)
    llm = build_chat_backend(config.llm, "llm")
    embedder = build_embedder(config.embedder, config.seed)
    summary = build_graph(
        args.corpus, args.out_graph, args.out_index, llm=llm, embedder=embedder,
        out_store=args.out_store, out_merge_report=args.out_merge_report,
        budget_tokens=args.budget_tokens,
        policy=MergePolicy(config.threshold),
        template_dir=config.template_dir)
    print(format_summary(summary))
    return 0


def _cmd_merge(args) -> int:
    graph = KnowledgeGraph.load(args.graph)
    index = EmbeddingIndex.load(args.index)
    policy = MergePolicy(args.threshold, args.tie_break)
    report = merge_pass(graph, index, policy)
    graph.save(args.out)
    if args.out_index:
        pruned = EmbeddingIndex()
        for nid in graph.node_ids():
            pruned.add(nid, index.get(nid))
        pruned.save(args.out_index)
    if args.report:
        report.save_jsonl(args.report)
    _emit({"merged_pairs": len(report.merged_pairs),
           "nodes": graph.node_count, "edges": graph.edge_count}, None)
    return 0


def _cmd_query(args) -> int:
    store = ChunkStore.load(args.store)
    backend = _cli_embedder(args)
    if args.graph:
        graph = KnowledgeGraph.load(args.graph)
        evidence = hybrid_evidence(store, graph, backend, args.query, args.k)
        _emit(evidence.to_dict(), args.out)
    else:
        hits = retrieve_top_k(store, backend, args.query, args.k)
        _emit({"query": args.query,
               "hits": [{"chunk_id": h.chunk_id, "similarity": h.similarity,
                         "text": h.text} for h in hits]}, args.out)
    return 0


def _parse_keywords(args) -> list[str]:
    if args.keywords_file:
        with open(args.keywords_file, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, list) or not all(isinstance(k, str) for k in data):
            raise ValidationError("keywords file must hold a JSON array of strings")
        keywords = [k.strip() for k in data if k.strip()]
    else:
        keywords = [k.strip() for k in (args.keywords or "").split(",") if k.strip()]
    if not keywords:
        raise ValidationError("no keywords given")
    return keywords


def _cmd_traverse(args) -> int:
    graph = KnowledgeGraph.load(args.graph)
    index = EmbeddingIndex.load(args.index)
    backend = _cli_embedder(args)
    options = TraversalOptions(n=args.n, depth_limit=args.depth, stop=args.stop,
                               directed=args.directed,
                               min_similarity=args.min_similarity)
    report = traverse_all_pairs(graph, index, backend, _parse_keywords(args),
                                args.algorithm, options)
    _emit(report.to_dict(), args.out)
    return 0


def _cmd_pipeline(args) -> int:
    config = load_config(args.config)
    pipeline_config = assemble_pipeline_config(
        config, algorithm=args.algorithm or "shortest", stop=args.stop)
    transcript = run_pipeline(pipeline_config, args.query)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(transcript.to_json())
    if transcript.error is not None:
        logger.error("pipeline failed at stage %s: %s",
                     transcript.error["stage"], transcript.error["message"])
        return 1
    logger.info("pipeline complete: stages %s", ",".join(transcript.stages_run))
    return 0


def _cmd_ablate(args) -> int:
    config = load_config(args.config)
    base = assemble_pipeline_config(config)
    judge_spec = dict(config.judge)
    if args.judge_endpoint:
        judge_spec["mode"] = "http"
        judge_spec["base_url"] = args.judge_endpoint
    if args.judge_model:
        judge_spec["model"] = args.judge_model
    judge_backend = build_chat_backend(judge_spec, "judge")
    seed = config.seed if args.seed is None else args.seed
    report = run_ablation(base, args.query, judge_backend, seed=seed,
                          rubric_path=config.rubric,
                          template_dir=config.template_dir)
    report.save(args.out)
    write_scores_csv(report, args.csv)
    if args.means_csv:
        write_means_csv(report, args.means_csv)
    if report.failures:
        for name, reason in report.failures.items():
            logger.error("configuration %s failed: %s", name, reason)
        return 1
    return 0


# ----------------------------------------------------------------------
# argument parsing


def _add_embedder_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--embedder", choices=("deterministic", "http"),
                        default="deterministic",
                        help="offline hash embedder or an HTTP endpoint "
                             "(EMBED_API_BASE/EMBED_MODEL)")
    parser.add_argument("--dim", type=int, default=64,
                        help="dimension for the deterministic embedder")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgidea",
        description="Build, merge, and explore concept graphs distilled from "
                    "text, and run the agent pipeline over them.")
    parser.add_argument("--log-level", default="info",
                        choices=("debug", "info", "warning", "error"))
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph",
                       help="chunk a corpus, extract triples, merge into one graph")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--corpus", required=True, help="directory of .txt/.md files")
    p.add_argument("--out-graph", required=True)
    p.add_argument("--out-index", required=True)
    p.add_argument("--out-store", help="directory for the chunk store")
    p.add_argument("--out-merge-report")
    p.add_argument("--budget-tokens", type=int, default=512)
    p.set_defaults(handler=_cmd_build_graph)

    p = sub.add_parser("merge", help="similarity merge pass over a saved graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--out-index", help="write the pruned embedding index here")
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--tie-break", choices=TIE_BREAKS, default="prefer_core")
    p.add_argument("--report", help="merge report JSONL path")
    p.set_defaults(handler=_cmd_merge)

    p = sub.add_parser("query", help="top-k chunk retrieval, optionally with the "
                                     "provenance subgraph")
    p.add_argument("--store", required=True, help="chunk store directory")
    p.add_argument("--query", required=True)
    p.add_argument("--graph", help="graph file; adds the provenance subgraph")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--out", help="write JSON here instead of stdout")
    _add_embedder_args(p)
    p.set_defaults(handler=_cmd_query)

    p = sub.add_parser("traverse", help="match keywords to nodes and enumerate "
                                        "paths between every pair")
    p.add_argument("--graph", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--keywords", help="comma-separated keyword list")
    p.add_argument("--keywords-file", help="JSON array of keywords")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="shortest")
    p.add_argument("--stop", help="waypoint keyword (algorithm=waypoint)")
    p.add_argument("-n", type=int, default=5)
    p.add_argument("--depth", type=int, default=5)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--min-similarity", type=float, default=0.0)
    p.add_argument("--out", help="write the report JSON here instead of stdout")
    _add_embedder_args(p)
    p.set_defaults(handler=_cmd_traverse)

    p = sub.add_parser("pipeline", help="run the agent pipeline end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--stop")
    p.add_argument("--out", required=True, help="transcript JSON path")
    p.set_defaults(handler=_cmd_pipeline)

    p = sub.add_parser("ablate", help="run the five stage-subset configurations "
                                      "and judge their answers")
    p.add_argument("--config", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--judge-endpoint", help="override the judge base URL")
    p.add_argument("--judge-model")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--csv", required=True, help="scores CSV path")
    p.add_argument("--means-csv")
    p.set_defaults(handler=_cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help (0) and usage errors (2)
        code = exc.code
        return code if isinstance(code, int) else 2
    _configure_logging(args.log_level)
    try:
        return args.handler(args)
    except KgError as exc:
        logger.error("%s", exc)
        return 1
    except OSError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
