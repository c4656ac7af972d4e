"""Cross-graph node merging driven by embedding similarity.

Two nodes are considered the same concept when their embedding cosine
similarity strictly exceeds the policy threshold (default 0.95).  The node
with the higher degree at merge time survives and absorbs the other's edges;
degree ties fall to the policy tie-break.  ``integrate`` folds one incoming
graph into a core graph node by node; ``merge_pass`` deduplicates a single
graph until no qualifying pair remains, so a second pass is always a no-op.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .embedding import EmbeddingIndex
from .errors import IntegrityError, ValidationError
from .graph import KnowledgeGraph

logger = logging.getLogger(__name__)

TIE_BREAKS = ("prefer_core", "prefer_incoming", "lexicographic")


@dataclass(slots=True)
class MergePolicy:
    similarity_threshold: float = 0.95
    tie_break: str = "prefer_core"

    def __post_init__(self) -> None:
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ValidationError("similarity_threshold must be in (0, 1]")
        if self.tie_break not in TIE_BREAKS:
            raise ValidationError(f"tie_break must be one of {TIE_BREAKS}")


@dataclass(slots=True)
class MergedPair:
    survivor: str
    removed: str
    similarity: float

    def to_dict(self) -> dict[str, Any]:
        return {"survivor": self.survivor, "removed": self.removed,
                "similarity": self.similarity}


@dataclass(slots=True)
class MergeReport:
    merged_pairs: list[MergedPair] = field(default_factory=list)
    nodes_added: int = 0
    edges_added: int = 0

    def save_jsonl(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for pair in self.merged_pairs:
                fh.write(json.dumps({"kind": "merge", **pair.to_dict()},
                                    ensure_ascii=False) + "\n")
            fh.write(json.dumps({"kind": "summary", "merged": len(self.merged_pairs),
                                 "nodes_added": self.nodes_added,
                                 "edges_added": self.edges_added}) + "\n")


def _vectors_for(graph: KnowledgeGraph, index: EmbeddingIndex, label: str) -> dict[str, np.ndarray]:
    missing = [nid for nid in graph.node_ids() if nid not in index]
    if missing:
        raise IntegrityError(f"{label} nodes lack embeddings: {missing[:5]!r}"
                             + (" ..." if len(missing) > 5 else ""))
    vectors = {}
    for nid in graph.node_ids():
        vec = index.get(nid)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise IntegrityError(f"embedding for {nid!r} has zero norm")
        vectors[nid] = vec / norm
    return vectors


def _nearest(candidates: list[str], unit_vectors: dict[str, np.ndarray],
             query_unit: np.ndarray) -> tuple[str | None, float]:
    """Best cosine match among candidates; ties go to the smaller id."""
    best_id: str | None = None
    best_sim = -2.0
    for cid in sorted(candidates):
        sim = float(np.dot(unit_vectors[cid], query_unit))
        if sim > best_sim:
            best_id, best_sim = cid, sim
    return best_id, best_sim


def integrate(core: KnowledgeGraph, incoming: KnowledgeGraph, index: EmbeddingIndex,
              policy: MergePolicy | None = None) -> MergeReport:
    """Fold ``incoming`` into ``core`` in place, merging near-duplicate nodes.

    Incoming nodes are processed in descending order of their best similarity
    against the original core (ties lexicographic).  Each node is matched
    against the *current* core, so a node can merge into material inserted
    earlier in the same call.  An incoming label that already exists in the
    core unifies by identity without a report entry.  Edges transfer as soon
    as both endpoints are resolved, which keeps survivor degrees live.
    """
    policy = policy or MergePolicy()
    core_units = _vectors_for(core, index, "core")
    incoming_units = _vectors_for(incoming, index, "incoming")
    report = MergeReport()

    order = _processing_order(core, incoming, core_units, incoming_units)
    resolved: dict[str, str] = {}
    alias: dict[str, str] = {}

    def final_id(node_id: str) -> str:
        while node_id in alias:
            node_id = alias[node_id]
        return node_id

    pending = list(incoming.edges())
    done = [False] * len(pending)

    for n_id in order:
        n_unit = incoming_units[n_id]
        n_node = incoming.get_node(n_id)
        if core.has_node(n_id):
            resolved[n_id] = n_id
        else:
            best_id, best_sim = _nearest(core.node_ids(), core_units, n_unit)
            if best_id is not None and best_sim > policy.similarity_threshold:
                survivor_is_core = _core_survives(
                    core.degree(best_id), incoming.degree(n_id), best_id, n_id, policy)
                if survivor_is_core:
                    resolved[n_id] = best_id
                    report.merged_pairs.append(MergedPair(best_id, n_id, best_sim))
                else:
                    core.add_node(n_id, n_node.node_type, n_node.embedding_ref,
                                  dict(n_node.extra))
                    core_units[n_id] = n_unit
                    core.replace_node(best_id, n_id)
                    del core_units[best_id]
                    alias[best_id] = n_id
                    resolved[n_id] = n_id
                    report.merged_pairs.append(MergedPair(n_id, best_id, best_sim))
            else:
                core.add_node(n_id, n_node.node_type, n_node.embedding_ref,
                              dict(n_node.extra))
                core_units[n_id] = n_unit
                resolved[n_id] = n_id
                report.nodes_added += 1
        # transfer every incoming edge whose endpoints are now both settled
        for i, edge in enumerate(pending):
            if done[i] or edge.source not in resolved or edge.target not in resolved:
                continue
            src = final_id(resolved[edge.source])
            tgt = final_id(resolved[edge.target])
            _, created = core.add_edge(src, tgt, edge.relation, edge.provenance,
                                       dict(edge.extra))
            if created:
                report.edges_added += 1
            done[i] = True

    leftovers = [pending[i].key() for i in range(len(pending)) if not done[i]]
    if leftovers:  # cannot happen once every node is resolved
        raise IntegrityError(f"untransferred incoming edges: {leftovers[:3]!r}")
    logger.debug("integrate(%r <- %r): %d merges, %d new nodes, %d new edges",
                 core.name, incoming.name, len(report.merged_pairs),
                 report.nodes_added, report.edges_added)
    return report


def _processing_order(core: KnowledgeGraph, incoming: KnowledgeGraph,
                      core_units: dict[str, np.ndarray],
                      incoming_units: dict[str, np.ndarray]) -> list[str]:
    core_ids = core.node_ids()
    scored = []
    for n_id in incoming.node_ids():
        _, best = _nearest(core_ids, core_units, incoming_units[n_id]) if core_ids else (None, -2.0)
        scored.append((-best, n_id))
    return [n_id for _, n_id in sorted(scored)]


def _core_survives(core_degree: int, incoming_degree: int, core_id: str,
                   incoming_id: str, policy: MergePolicy) -> bool:
    if core_degree != incoming_degree:
        return core_degree > incoming_degree
    if policy.tie_break == "prefer_core":
        return True
    if policy.tie_break == "prefer_incoming":
        return False
    return core_id < incoming_id


def merge_pass(graph: KnowledgeGraph, index: EmbeddingIndex,
               policy: MergePolicy | None = None) -> MergeReport:
    """Collapse near-duplicate nodes inside one graph until a fixpoint.

    Repeatedly merges the globally most similar qualifying pair (similarity
    strictly above the threshold); the higher-degree node survives, degree
    ties going to the lexicographically smaller id.  Running the pass again
    immediately afterwards reports nothing.
    """
    policy = policy or MergePolicy()
    units = _vectors_for(graph, index, "graph")
    report = MergeReport()
    while True:
        ids = sorted(graph.node_ids())
        best: tuple[float, str, str] | None = None
        for i, u in enumerate(ids):
            for v in ids[i + 1:]:
                sim = float(np.dot(units[u], units[v]))
                if sim <= policy.similarity_threshold:
                    continue
                if best is None or sim > best[0]:
                    best = (sim, u, v)
        if best is None:
            return report
        sim, u, v = best
        du, dv = graph.degree(u), graph.degree(v)
        if du != dv:
            survivor, removed = (u, v) if du > dv else (v, u)
        else:
            survivor, removed = (u, v) if u < v else (v, u)
        graph.replace_node(removed, survivor)
        del units[removed]
        report.merged_pairs.append(MergedPair(survivor, removed, sim))
