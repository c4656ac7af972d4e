"""Directed multigraph store with chunk-level provenance on every edge.

Nodes are identified by their label.  Parallel edges between the same pair of
nodes are kept as long as their relation labels differ; an edge repeated with
the same (source, target, relation) key only unions its provenance set.  The
on-disk format is line-delimited JSON with kind-tagged records::

    {"kind": "meta", "format_version": 1, "name": "..."}
    {"kind": "node", "id": "...", "type": "..."}
    {"kind": "edge", "source": "...", "target": "...", "relation": "...", "provenance": ["..."]}

Nodes are always written before any edge that references them, and a file
that declares an edge before both endpoints is rejected on load.  Keys this
module does not know about are carried through a load/save round-trip.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import GraphParseError, IntegrityError, NotFoundError, ValidationError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

_NODE_KNOWN_KEYS = frozenset({"kind", "id", "type", "embedding_ref"})
_EDGE_KNOWN_KEYS = frozenset({"kind", "source", "target", "relation", "provenance"})
_META_KNOWN_KEYS = frozenset({"kind", "format_version", "name"})


def document_id_for_chunk(chunk_id: str) -> str:
    """Chunk ids look like ``<document_id>::<seq>``; a bare id is its own document."""
    return chunk_id.split("::", 1)[0]


@dataclass(slots=True)
class NodeRecord:
    id: str
    node_type: str = ""
    embedding_ref: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)


@dataclass(slots=True)
class EdgeRecord:
    source: str
    target: str
    relation: str
    provenance: set[str]
    extra: dict[str, Any] = field(default_factory=dict)

    def key(self) -> tuple[str, str, str]:
        return (self.source, self.target, self.relation)

    @property
    def document_ids(self) -> set[str]:
        return {document_id_for_chunk(cid) for cid in self.provenance}

    def as_sentence(self) -> str:
        return f"{self.source} {self.relation} {self.target}."


class KnowledgeGraph:
    """In-memory property graph keyed by node label."""

    def __init__(self, name: str = ""):
        self.name = name
        self._nodes: dict[str, NodeRecord] = {}
        self._edges: list[EdgeRecord] = []
        self._by_key: dict[tuple[str, str, str], int] = {}
        self._out: dict[str, list[int]] = {}
        self._in: dict[str, list[int]] = {}
        self._meta_extra: dict[str, Any] = {}

    # ------------------------------------------------------------------
    # introspection

    @property
    def node_count(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def get_node(self, node_id: str) -> NodeRecord:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise NotFoundError(f"unknown node {node_id!r}") from None

    def node_ids(self) -> list[str]:
        return list(self._nodes)

    def nodes(self) -> Iterator[NodeRecord]:
        return iter(self._nodes.values())

    def edges(self) -> Iterator[EdgeRecord]:
        return iter(self._edges)

    def out_edges(self, node_id: str) -> list[EdgeRecord]:
        return [self._edges[i] for i in self._out.get(node_id, ())]

    def in_edges(self, node_id: str) -> list[EdgeRecord]:
        return [self._edges[i] for i in self._in.get(node_id, ())]

    def successors(self, node_id: str) -> set[str]:
        return {self._edges[i].target for i in self._out.get(node_id, ())}

    def predecessors(self, node_id: str) -> set[str]:
        return {self._edges[i].source for i in self._in.get(node_id, ())}

    def neighbors(self, node_id: str) -> set[str]:
        return self.successors(node_id) | self.predecessors(node_id)

    def edges_between(self, source: str, target: str) -> list[EdgeRecord]:
        return [e for e in self.out_edges(source) if e.target == target]

    def degree(self, node_id: str) -> int:
        """In-degree plus out-degree, counting parallel edges; a self-loop adds 2."""
        if node_id not in self._nodes:
            raise NotFoundError(f"unknown node {node_id!r}")
        return len(self._out.get(node_id, ())) + len(self._in.get(node_id, ()))

    # ------------------------------------------------------------------
    # mutation

    def add_node(
        self,
        node_id: str,
        node_type: str = "",
        embedding_ref: str | None = None,
        extra: dict[str, Any] | None = None,
    ) -> NodeRecord:
        if not node_id:
            raise ValidationError("node id must be a non-empty string")
        node = self._nodes.get(node_id)
        if node is None:
            node = NodeRecord(node_id, node_type, embedding_ref, dict(extra or {}))
            self._nodes[node_id] = node
            return node
        # re-adding is allowed; blank fields never overwrite filled ones
        if node_type and not node.node_type:
            node.node_type = node_type
        if embedding_ref is not None and node.embedding_ref is None:
            node.embedding_ref = embedding_ref
        if extra:
            for k, v in extra.items():
                node.extra.setdefault(k, v)
        return node

    def add_triple(self, source: str, relation: str, target: str, chunk_id: str) -> EdgeRecord:
        """Insert one provenance-tagged edge, auto-creating missing endpoint nodes.

        Repeating an existing (source, target, relation) key unions the chunk id
        into the existing edge instead of growing the edge list.
        """
        for label, what in ((source, "source"), (target, "target"),
                            (relation, "relation"), (chunk_id, "chunk id")):
            if not label:
                raise ValidationError(f"{what} must be a non-empty string")
        self.add_node(source)
        self.add_node(target)
        return self._insert_edge(source, target, relation, {chunk_id})

    def add_edge(
        self,
        source: str,
        target: str,
        relation: str,
        provenance: Iterable[str],
        extra: dict[str, Any] | None = None,
    ) -> tuple[EdgeRecord, bool]:
        """Like add_triple but carries a whole provenance set.

        Returns the edge and whether a new record was created (False when the
        key already existed and only provenance was unioned).
        """
        self.add_node(source)
        self.add_node(target)
        created = (source, target, relation) not in self._by_key
        edge = self._insert_edge(source, target, relation, set(provenance), extra)
        return edge, created

    def has_edge(self, source: str, target: str, relation: str) -> bool:
        return (source, target, relation) in self._by_key

    def replace_node(self, old_id: str, new_id: str) -> None:
        """Re-point every edge touching old_id onto new_id and drop old_id.

        Parallel duplicates produced by the re-point collapse by provenance
        union, so the edge count never grows.  new_id must already exist.
        """
        if old_id == new_id:
            raise ValidationError("replace_node needs two distinct node ids")
        self.get_node(old_id)
        self.get_node(new_id)
        records = self._edges
        self._edges = []
        self._by_key = {}
        self._out = {}
        self._in = {}
        del self._nodes[old_id]
        for edge in records:
            source = new_id if edge.source == old_id else edge.source
            target = new_id if edge.target == old_id else edge.target
            self._insert_edge(source, target, edge.relation, edge.provenance, edge.extra)

    def _insert_edge(
        self,
        source: str,
        target: str,
        relation: str,
        provenance: set[str],
        extra: dict[str, Any] | None = None,
    ) -> EdgeRecord:
        if not provenance:
            raise ValidationError("edge provenance must be non-empty")
        key = (source, target, relation)
        idx = self._by_key.get(key)
        if idx is not None:
            edge = self._edges[idx]
            edge.provenance |= provenance
            if extra:
                for k, v in extra.items():
                    edge.extra.setdefault(k, v)
            return edge
        edge = EdgeRecord(source, target, relation, set(provenance), dict(extra or {}))
        idx = len(self._edges)
        self._edges.append(edge)
        self._by_key[key] = idx
        self._out.setdefault(source, []).append(idx)
        self._in.setdefault(target, []).append(idx)
        return edge

    # ------------------------------------------------------------------
    # queries

    def subgraph_for_chunks(self, chunk_ids: Iterable[str]) -> "KnowledgeGraph":
        """Edges whose provenance intersects the ids, plus their endpoint nodes.

        Provenance sets are carried over verbatim, including ids outside the
        query set.
        """
        wanted = set(chunk_ids)
        sub = KnowledgeGraph(name=self.name)
        for edge in self._edges:
            if edge.provenance & wanted:
                for nid in (edge.source, edge.target):
                    if not sub.has_node(nid):
                        node = self._nodes[nid]
                        sub.add_node(nid, node.node_type, node.embedding_ref, dict(node.extra))
                sub._insert_edge(edge.source, edge.target, edge.relation,
                                 set(edge.provenance), dict(edge.extra))
        return sub

    def validate(self) -> list[str]:
        """Non-fatal findings: currently self-loop flags.

        Dangling edges cannot be represented because insertion auto-creates
        endpoints, but the scan double-checks anyway and raises if one appears.
        """
        findings = []
        for edge in self._edges:
            if edge.source not in self._nodes or edge.target not in self._nodes:
                raise IntegrityError(f"dangling edge {edge.key()!r}")
            if edge.source == edge.target:
                findings.append(f"self-loop on {edge.source!r} via {edge.relation!r}")
        return findings

    def structurally_equal(self, other: "KnowledgeGraph") -> bool:
        """Order-independent equality on nodes, edge keys, and provenance."""
        if set(self._nodes) != set(other._nodes):
            return False
        for nid, node in self._nodes.items():
            if node.node_type != other._nodes[nid].node_type:
                return False
        if len(self._edges) != len(other._edges):
            return False
        theirs = {e.key(): e.provenance for e in other._edges}
        for edge in self._edges:
            if theirs.get(edge.key()) != edge.provenance:
                return False
        return True

    def copy(self) -> "KnowledgeGraph":
        dup = KnowledgeGraph(name=self.name)
        dup._meta_extra = dict(self._meta_extra)
        for node in self._nodes.values():
            dup.add_node(node.id, node.node_type, node.embedding_ref, dict(node.extra))
        for edge in self._edges:
            dup._insert_edge(edge.source, edge.target, edge.relation,
                             set(edge.provenance), dict(edge.extra))
        return dup

    # ------------------------------------------------------------------
    # persistence

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            meta: dict[str, Any] = {"kind": "meta", "format_version": FORMAT_VERSION, "name": self.name}
            meta.update(self._meta_extra)
            fh.write(json.dumps(meta, ensure_ascii=False) + "\n")
            for node in self._nodes.values():
                rec: dict[str, Any] = {"kind": "node", "id": node.id, "type": node.node_type}
                if node.embedding_ref is not None:
                    rec["embedding_ref"] = node.embedding_ref
                rec.update(node.extra)
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            for edge in self._edges:
                rec = {
                    "kind": "edge",
                    "source": edge.source,
                    "target": edge.target,
                    "relation": edge.relation,
                    "provenance": sorted(edge.provenance),
                }
                rec.update(edge.extra)
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        logger.debug("saved graph %r: %d nodes, %d edges", self.name, self.node_count, self.edge_count)

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeGraph":
        path = Path(path)
        graph = cls()
        with path.open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise GraphParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})", lineno) from exc
                if not isinstance(rec, dict):
                    raise GraphParseError(f"{path}:{lineno}: record is not an object", lineno)
                kind = rec.get("kind")
                if kind == "meta":
                    graph.name = rec.get("name", graph.name)
                    graph._meta_extra.update(
                        {k: v for k, v in rec.items() if k not in _META_KNOWN_KEYS})
                elif kind == "node":
                    cls._load_node(graph, rec, path, lineno)
                elif kind == "edge":
                    cls._load_edge(graph, rec, path, lineno)
                else:
                    raise GraphParseError(f"{path}:{lineno}: unknown record kind {kind!r}", lineno)
        return graph

    @staticmethod
    def _load_node(graph: "KnowledgeGraph", rec: dict[str, Any], path: Path, lineno: int) -> None:
        node_id = rec.get("id")
        if not isinstance(node_id, str) or not node_id:
            raise GraphParseError(f"{path}:{lineno}: node record needs a non-empty 'id'", lineno)
        if node_id in graph._nodes:
            raise GraphParseError(f"{path}:{lineno}: duplicate node id {node_id!r}", lineno)
        extra = {k: v for k, v in rec.items() if k not in _NODE_KNOWN_KEYS}
        graph.add_node(node_id, rec.get("type", ""), rec.get("embedding_ref"), extra)

    @staticmethod
    def _load_edge(graph: "KnowledgeGraph", rec: dict[str, Any], path: Path, lineno: int) -> None:
        try:
            source, target, relation = rec["source"], rec["target"], rec["relation"]
            provenance = rec["provenance"]
        except KeyError as exc:
            raise GraphParseError(f"{path}:{lineno}: edge record missing {exc.args[0]!r}", lineno) from None
        if source not in graph._nodes or target not in graph._nodes:
            missing = source if source not in graph._nodes else target
            raise IntegrityError(
                f"{path}:{lineno}: edge references node {missing!r} not declared above it")
        if not isinstance(provenance, list) or not provenance:
            raise GraphParseError(f"{path}:{lineno}: edge provenance must be a non-empty list", lineno)
        extra = {k: v for k, v in rec.items() if k not in _EDGE_KNOWN_KEYS}
        graph._insert_edge(source, target, relation, set(provenance), extra)
