"""Corpus-to-graph build: chunk, extract per chunk, compose per document,
then fold every document graph into one core with similarity merging."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

from .embedding import EmbeddingIndex, embed_many
from .errors import (
    ExtractionFailedError,
    IntegrityError,
    ValidationError,
)
from .graph import KnowledgeGraph
from .ingestion import chunk_document, compose_document_graph, extract_fragment
from .llm import load_template
from .merging import MergePolicy, MergeReport, integrate
from .retrieval import ChunkStore

logger = logging.getLogger(__name__)

CORPUS_SUFFIXES = (".txt", ".md")


def load_corpus(corpus_dir: str | Path) -> list[tuple[str, str]]:
    """(document_id, text) pairs from a directory, sorted by file name."""
    directory = Path(corpus_dir)
    if not directory.is_dir():
        raise ValidationError(f"corpus directory not found: {directory}")
    documents: list[tuple[str, str]] = []
    for entry in sorted(directory.iterdir(), key=lambda p: p.name):
        if entry.is_file() and entry.suffix.lower() in CORPUS_SUFFIXES:
            documents.append((entry.stem, entry.read_text(encoding="utf-8")))
    if not documents:
        raise ValidationError(f"no documents (.txt/.md) in {directory}")
    return documents


def build_graph(corpus_dir: str | Path, out_graph: str | Path,
                out_index: str | Path, *, llm, embedder,
                out_store: str | Path | None = None,
                out_merge_report: str | Path | None = None,
                budget_tokens: int = 512,
                policy: MergePolicy | None = None,
                template_dir: str | None = None) -> dict[str, Any]:
    """Build one merged graph from every document in the corpus.

    A document that fails extraction is logged and skipped; the build only
    fails outright when no document survives.  Outputs are deterministic for
    a fixed corpus, scripted backend, and embedder.
    """
    documents = load_corpus(corpus_dir)
    template = load_template("extraction.txt", template_dir)
    policy = policy or MergePolicy()

    core = KnowledgeGraph(name=Path(corpus_dir).name or "corpus")
    index = EmbeddingIndex()
    store = ChunkStore()
    combined = MergeReport()
    failures: dict[str, str] = {}
    chunk_count = 0

    for document_id, text in documents:
        try:
            chunks = chunk_document(document_id, text, budget_tokens)
            fragments = [extract_fragment(llm, chunk, template).fragment
                         for chunk in chunks]
            document_graph = compose_document_graph(fragments)
        except (ValidationError, IntegrityError, ExtractionFailedError) as exc:
            logger.error("skipping document %r: %s", document_id, exc)
            failures[document_id] = str(exc)
            continue
        for chunk in chunks:
            store.add(chunk)
        chunk_count += len(chunks)
        new_ids = [nid for nid in document_graph.node_ids() if nid not in index]
        for nid, vector in zip(new_ids, embed_many(embedder, new_ids)):
            index.add(nid, vector)
        report = integrate(core, document_graph, index, policy)
        combined.merged_pairs.extend(report.merged_pairs)
        combined.nodes_added += report.nodes_added
        combined.edges_added += report.edges_added

    if len(failures) == len(documents):
        raise ValidationError("every document failed to build; nothing to save")

    core.save(out_graph)
    # persist only the vectors for nodes that survived merging
    final_index = EmbeddingIndex()
    for nid in core.node_ids():
        final_index.add(nid, index.get(nid))
    final_index.save(out_index)
    if out_store is not None:
        store.embed_all(embedder)
        store.save(out_store)
    if out_merge_report is not None:
        combined.save_jsonl(out_merge_report)

    summary = {
        "graph": core.name,
        "documents": len(documents),
        "documents_failed": len(failures),
        "chunks": chunk_count,
        "nodes": core.node_count,
        "edges": core.edge_count,
        "merged_pairs": len(combined.merged_pairs),
        "failures": failures,
    }
    logger.info("built graph %r: %d nodes, %d edges from %d documents",
                core.name, core.node_count, core.edge_count, len(documents))
    return summary


def format_summary(summary: dict[str, Any]) -> str:
    """Graph size table in the Nodes/Edges reporting shape."""
    name = str(summary.get("graph", "graph"))
    width = max(len(name), len("Graph")) + 2
    lines = [
        f"{'Graph':<{width}}{'Nodes':>8}  {'Edges':>8}",
        f"{name:<{width}}{summary['nodes']:>8}  {summary['edges']:>8}",
        (f"documents={summary['documents']} "
         f"failed={summary['documents_failed']} "
         f"chunks={summary['chunks']} merged_pairs={summary['merged_pairs']}"),
    ]
    return "\n".join(lines)
