"""Embedding retrieval over chunk stores, plus hybrid text+subgraph evidence."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, NamedTuple, Sequence

import numpy as np

from .embedding import EmbeddingIndex, embed_text
from .errors import NotFoundError, ValidationError
from .graph import KnowledgeGraph
from .ingestion import Chunk
from .traversal import render_relationships

logger = logging.getLogger(__name__)

CHUNKS_FILE = "chunks.jsonl"
CHUNK_INDEX_FILE = "chunk_embeddings.jsonl"


class ChunkHit(NamedTuple):
    chunk_id: str
    similarity: float
    text: str


class ChunkStore:
    """Chunks plus their embedding index, persisted side by side as JSON-lines."""

    def __init__(self) -> None:
        self._chunks: dict[str, Chunk] = {}
        self.index = EmbeddingIndex()

    def __len__(self) -> int:
        return len(self._chunks)

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._chunks

    def chunk_ids(self) -> list[str]:
        return list(self._chunks)

    def get(self, chunk_id: str) -> Chunk:
        try:
            return self._chunks[chunk_id]
        except KeyError:
            raise NotFoundError(f"unknown chunk {chunk_id!r}") from None

    def add(self, chunk: Chunk, vector: Sequence[float] | None = None) -> None:
        self._chunks[chunk.chunk_id] = chunk
        if vector is not None:
            self.index.add(chunk.chunk_id, vector)

    def embed_all(self, backend, batch_size: int = 64) -> None:
        """Embed every chunk that does not yet have a vector."""
        todo = [cid for cid in self._chunks if cid not in self.index]
        for start in range(0, len(todo), batch_size):
            batch = todo[start:start + batch_size]
            vectors = backend.embed([self._chunks[cid].text for cid in batch])
            for cid, vec in zip(batch, vectors):
                self.index.add(cid, vec)

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with (directory / CHUNKS_FILE).open("w", encoding="utf-8") as fh:
            for chunk in self._chunks.values():
                fh.write(json.dumps(chunk.to_dict(), ensure_ascii=False) + "\n")
        self.index.save(directory / CHUNK_INDEX_FILE)

    @classmethod
    def load(cls, directory: str | Path) -> "ChunkStore":
        directory = Path(directory)
        store = cls()
        with (directory / CHUNKS_FILE).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    chunk = Chunk.from_dict(json.loads(line))
                    store._chunks[chunk.chunk_id] = chunk
        index_path = directory / CHUNK_INDEX_FILE
        if index_path.exists():
            store.index = EmbeddingIndex.load(index_path)
        return store


def retrieve_top_k(store: ChunkStore, backend, query: str, k: int = 5) -> list[ChunkHit]:
    """k chunks by cosine similarity, descending; ties by ascending chunk id."""
    if not query:
        raise ValidationError("query must be non-empty")
    if k < 1:
        raise ValidationError("k must be >= 1")
    if len(store) == 0:
        raise ValidationError("chunk store is empty")
    missing = [cid for cid in store.chunk_ids() if cid not in store.index]
    if missing:
        raise ValidationError(f"chunks lack embeddings: {missing[:5]!r}")
    query_vec = embed_text(backend, query)
    qnorm = float(np.linalg.norm(query_vec))
    scored: list[tuple[float, str]] = []
    for cid in store.chunk_ids():
        vec = store.index.get(cid)
        sim = float(np.dot(vec, query_vec) / (np.linalg.norm(vec) * qnorm))
        scored.append((sim, cid))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [ChunkHit(cid, sim, store.get(cid).text) for sim, cid in scored[:k]]


@dataclass(slots=True)
class Evidence:
    query: str
    hits: list[ChunkHit]
    subgraph: KnowledgeGraph
    rendered: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "query": self.query,
            "hits": [{"chunk_id": h.chunk_id, "similarity": h.similarity, "text": h.text}
                     for h in self.hits],
            "subgraph": {
                "nodes": [{"id": n.id, "type": n.node_type} for n in self.subgraph.nodes()],
                "edges": [{"source": e.source, "target": e.target, "relation": e.relation,
                           "provenance": sorted(e.provenance)} for e in self.subgraph.edges()],
            },
            "rendered": self.rendered,
        }


def render_evidence(hits: Sequence[ChunkHit], subgraph: KnowledgeGraph) -> str:
    parts = [f"[chunk:{hit.chunk_id}] {hit.text}" for hit in hits]
    sentences = render_relationships(subgraph)
    if sentences:
        parts.append(f"Relationships: {sentences}")
    return "\n".join(parts)


def hybrid_evidence(store: ChunkStore, graph: KnowledgeGraph, backend, query: str,
                    k: int = 5) -> Evidence:
    """Top-k chunks joined with the provenance subgraph those chunks support."""
    hits = retrieve_top_k(store, backend, query, k)
    subgraph = graph.subgraph_for_chunks([hit.chunk_id for hit in hits])
    return Evidence(query, hits, subgraph, render_evidence(hits, subgraph))
