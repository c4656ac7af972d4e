"""Document chunking and LLM triple extraction.

Chunking prefers markdown header boundaries, then blank-line paragraphs, then
sentence ends, packing material greedily up to a token budget estimated as
len(text) / 4.  A span that still exceeds the budget at sentence granularity is
hard-split and logged.  Extraction sends each chunk through a chat backend with
a JSON-schema prompt and parses the reply into a provenance-tagged fragment.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import ExtractionFailedError, ValidationError
from .graph import KnowledgeGraph, document_id_for_chunk
from .llm import render_template

logger = logging.getLogger(__name__)

MIN_TOKEN_BUDGET = 64

EXTRACTION_SCHEMA = (
    '{"nodes": [{"id": "<entity label>", "type": "<entity category>"}], '
    '"edges": [{"source": "<node id>", "target": "<node id>", '
    '"relation": "<relationship phrase>"}]}'
)

_HEADER_RE = re.compile(r"^(#{1,6})\s+(.*)$")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def token_estimate(text: str) -> int:
    """Characters / 4, rounded up; the crude-but-stable budget currency."""
    return max(1, math.ceil(len(text) / 4)) if text else 0


@dataclass(slots=True)
class Chunk:
    chunk_id: str
    document_id: str
    section: str | None
    text: str
    token_estimate: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "chunk_id": self.chunk_id,
            "document_id": self.document_id,
            "section": self.section,
            "text": self.text,
            "token_estimate": self.token_estimate,
        }

    @classmethod
    def from_dict(cls, rec: dict[str, Any]) -> "Chunk":
        return cls(rec["chunk_id"], rec["document_id"], rec.get("section"),
                   rec["text"], rec["token_estimate"])


def chunk_document(document_id: str, text: str, budget_tokens: int = 512) -> list[Chunk]:
    """Split one document into budgeted chunks.

    Packing never crosses a markdown header, so a short two-section document
    still yields two chunks.  Whitespace at cut points is the only material
    dropped; concatenating the chunk texts reproduces the document modulo that
    whitespace.
    """
    if not document_id:
        raise ValidationError("document_id must be non-empty")
    if budget_tokens < MIN_TOKEN_BUDGET:
        raise ValidationError(f"budget_tokens must be >= {MIN_TOKEN_BUDGET}")
    if not text.strip():
        raise ValidationError(f"document {document_id!r} has no content")

    chunks: list[Chunk] = []

    def emit(section: str | None, piece: str) -> None:
        piece = piece.strip()
        if not piece:
            return
        cid = f"{document_id}::{len(chunks):04d}"
        chunks.append(Chunk(cid, document_id, section, piece, token_estimate(piece)))

    for section, body in _split_sections(text):
        pending = ""
        for block in _split_blocks(body, budget_tokens, document_id):
            candidate = f"{pending}\n\n{block}" if pending else block
            if token_estimate(candidate) <= budget_tokens:
                pending = candidate
            else:
                emit(section, pending)
                pending = block
        emit(section, pending)
    return chunks


def _split_sections(text: str) -> list[tuple[str | None, str]]:
    """(section label, body) pairs; the header line stays inside its body."""
    sections: list[tuple[str | None, str]] = []
    label: str | None = None
    lines: list[str] = []
    for line in text.splitlines():
        m = _HEADER_RE.match(line)
        if m:
            if any(s.strip() for s in lines):
                sections.append((label, "\n".join(lines)))
            label = m.group(2).strip()
            lines = [line]
        else:
            lines.append(line)
    if any(s.strip() for s in lines):
        sections.append((label, "\n".join(lines)))
    return sections


def _split_blocks(body: str, budget_tokens: int, document_id: str) -> list[str]:
    """Paragraphs, then sentences, then hard character splits, all within budget."""
    blocks: list[str] = []
    for paragraph in re.split(r"\n\s*\n", body):
        if not paragraph.strip():
            continue
        if token_estimate(paragraph.strip()) <= budget_tokens:
            blocks.append(paragraph.strip())
            continue
        for sentence in _SENTENCE_SPLIT_RE.split(paragraph.strip()):
            if not sentence.strip():
                continue
            if token_estimate(sentence) <= budget_tokens:
                blocks.append(sentence)
                continue
            limit = budget_tokens * 4
            logger.warning("hard split in document %r: span of ~%d tokens exceeds budget %d",
                           document_id, token_estimate(sentence), budget_tokens)
            for start in range(0, len(sentence), limit):
                piece = sentence[start:start + limit]
                if piece.strip():
                    blocks.append(piece)
    return blocks


# ----------------------------------------------------------------------
# extraction


@dataclass(slots=True)
class GraphFragment:
    """One chunk's worth of extracted triples; every edge cites that chunk."""

    graph: KnowledgeGraph
    origin_chunk_id: str

    @property
    def document_id(self) -> str:
        return document_id_for_chunk(self.origin_chunk_id)


@dataclass(slots=True)
class ExtractionResult:
    chunk_id: str
    fragment: GraphFragment
    raw_response: str
    attempts: int


REFORMAT_SUFFIX = (
    "\n\nYour previous reply could not be used: {error}\n"
    "Reply again with JSON only, exactly matching the schema."
)


def extract_fragment(llm, chunk: Chunk, template: str, max_attempts: int = 2) -> ExtractionResult:
    """Run the extraction prompt for one chunk, retrying once with the parse error.

    Transport failures from the backend propagate unchanged; only parse
    failures consume attempts.
    """
    if max_attempts < 1:
        raise ValidationError("max_attempts must be >= 1")
    prompt = render_template(template, SCHEMA=EXTRACTION_SCHEMA, CHUNK_TEXT=chunk.text)
    raw = ""
    error = ""
    for attempt in range(1, max_attempts + 1):
        raw = llm.complete([{"role": "user", "content": prompt}])
        try:
            nodes, edges = _parse_extraction_json(raw)
        except ValueError as exc:
            error = str(exc)
            logger.warning("extraction parse failure on %s (attempt %d): %s",
                           chunk.chunk_id, attempt, error)
            prompt = render_template(template, SCHEMA=EXTRACTION_SCHEMA, CHUNK_TEXT=chunk.text)
            prompt += REFORMAT_SUFFIX.format(error=error)
            continue
        graph = _fragment_graph(chunk, nodes, edges)
        return ExtractionResult(chunk.chunk_id, GraphFragment(graph, chunk.chunk_id), raw, attempt)
    raise ExtractionFailedError(
        f"chunk {chunk.chunk_id}: unparseable after {max_attempts} attempts ({error})",
        raw_response=raw)


def _parse_extraction_json(raw: str) -> tuple[list[dict], list[dict]]:
    """Accepts raw JSON or JSON wrapped in prose/code fences; validates shape."""
    payload = first_json_object(raw)
    if payload is None:
        raise ValueError("no JSON object found in the reply")
    nodes = payload.get("nodes")
    edges = payload.get("edges")
    if not isinstance(nodes, list) or not isinstance(edges, list):
        raise ValueError("'nodes' and 'edges' must both be JSON arrays")
    for node in nodes:
        if not isinstance(node, dict) or not isinstance(node.get("id"), str) or not node["id"]:
            raise ValueError(f"bad node entry: {node!r}")
    for edge in edges:
        if not isinstance(edge, dict):
            raise ValueError(f"bad edge entry: {edge!r}")
        for key in ("source", "target", "relation"):
            if not isinstance(edge.get(key), str) or not edge[key]:
                raise ValueError(f"edge entry missing {key!r}: {edge!r}")
    return nodes, edges


def first_json_object(raw: str) -> dict | None:
    """First decodable JSON object in a reply, tolerating prose and code fences."""
    text = raw.strip()
    if text.startswith("```"):
        text = re.sub(r"^```[a-zA-Z]*\s*", "", text)
        text = re.sub(r"\s*```$", "", text)
    start = text.find("{")
    if start < 0:
        return None
    decoder = json.JSONDecoder()
    for idx in range(start, len(text)):
        if text[idx] != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text[idx:])
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _fragment_graph(chunk: Chunk, nodes: list[dict], edges: list[dict]) -> KnowledgeGraph:
    graph = KnowledgeGraph(name=chunk.chunk_id)
    declared: set[str] = set()
    for node in nodes:
        graph.add_node(node["id"], node.get("type", "") or "")
        declared.add(node["id"])
    for edge in edges:
        for endpoint in (edge["source"], edge["target"]):
            if endpoint not in declared:
                logger.warning("chunk %s: edge endpoint %r not in node list; adding as 'unknown'",
                               chunk.chunk_id, endpoint)
                graph.add_node(endpoint, "unknown")
                declared.add(endpoint)
        graph.add_triple(edge["source"], edge["relation"], edge["target"], chunk.chunk_id)
    return graph


def compose_document_graph(fragments: Sequence[GraphFragment]) -> KnowledgeGraph:
    """Union all fragments of one document into a per-document graph."""
    if not fragments:
        raise ValidationError("compose_document_graph needs at least one fragment")
    doc_ids = {f.document_id for f in fragments}
    if len(doc_ids) != 1:
        raise ValidationError(f"fragments span multiple documents: {sorted(doc_ids)!r}")
    doc_id = doc_ids.pop()
    graph = KnowledgeGraph(name=doc_id)
    for fragment in fragments:
        for node in fragment.graph.nodes():
            graph.add_node(node.id, node.node_type)
        for edge in fragment.graph.edges():
            for cid in sorted(edge.provenance):
                graph.add_triple(edge.source, edge.relation, edge.target, cid)
    return graph
