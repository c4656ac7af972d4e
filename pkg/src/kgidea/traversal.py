"""Path search over the knowledge graph and the all-pairs keyword driver.

Four algorithms are exposed: minimum-hop shortest path, the top-N shortest
simple paths, depth-limited exhaustive DFS, and waypoint routing through a
semantic stop.  Edges are treated as undirected by default because relation
direction is irrelevant when hunting for conceptual connections; directed
traversal stays available via a flag.

Determinism is part of the contract.  Whenever several minimum-hop paths
exist, the lexicographically smallest node sequence (plain string ordering,
case sensitive) wins; top-N output is ordered by (hop count, node sequence)
and depth-limited DFS emits discovery order with neighbors visited in
lexicographic order.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Iterable

from .embedding import EmbeddingIndex, NodeMatch, nearest_node
from .errors import NotFoundError, ValidationError
from .graph import EdgeRecord, KnowledgeGraph

logger = logging.getLogger(__name__)

ALGORITHMS = ("shortest", "top_n", "dfs", "waypoint")


@dataclass(slots=True)
class PathResult:
    nodes: list[str]
    edges: list[EdgeRecord]
    algorithm: str
    is_simple: bool
    waypoint: str | None = None

    @property
    def hop_count(self) -> int:
        return len(self.edges)

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": list(self.nodes),
            "edges": [[e.source, e.relation, e.target] for e in self.edges],
            "algorithm": self.algorithm,
            "is_simple": self.is_simple,
            "waypoint": self.waypoint,
        }


@dataclass(slots=True)
class TraversalOptions:
    n: int = 5
    depth_limit: int = 5
    stop: str | None = None
    directed: bool = False
    min_similarity: float = 0.0


@dataclass(slots=True)
class TraversalReport:
    keyword_matches: list[NodeMatch]
    pairs_attempted: int
    pairs_found: int
    paths: list[PathResult]
    found_ratio: float
    subgraph: KnowledgeGraph
    rendered: str
    waypoint_match: NodeMatch | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "keyword_matches": [
                {"query": m.query, "node_id": m.node_id, "similarity": m.similarity}
                for m in self.keyword_matches
            ],
            "pairs_attempted": self.pairs_attempted,
            "pairs_found": self.pairs_found,
            "found_ratio": self.found_ratio,
            "paths": [p.to_dict() for p in self.paths],
            "rendered": self.rendered,
            "waypoint": (
                {"query": self.waypoint_match.query, "node_id": self.waypoint_match.node_id,
                 "similarity": self.waypoint_match.similarity}
                if self.waypoint_match else None),
        }


def _require_nodes(graph: KnowledgeGraph, *node_ids: str) -> None:
    for nid in node_ids:
        if not graph.has_node(nid):
            raise NotFoundError(f"unknown node {nid!r}")


def _step_neighbors(graph: KnowledgeGraph, node_id: str, directed: bool) -> set[str]:
    return graph.successors(node_id) if directed else graph.neighbors(node_id)


def _distances_to(graph: KnowledgeGraph, target: str, directed: bool) -> dict[str, int]:
    """BFS hop counts toward ``target`` (over reversed edges when directed)."""
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt: list[str] = []
        for node in frontier:
            back = graph.predecessors(node) if directed else graph.neighbors(node)
            for other in back:
                if other not in dist:
                    dist[other] = dist[node] + 1
                    nxt.append(other)
        frontier = nxt
    return dist


def _pick_edge(graph: KnowledgeGraph, u: str, v: str, directed: bool) -> EdgeRecord:
    """Deterministic representative edge for the hop u -> v."""
    candidates = graph.edges_between(u, v)
    if not directed and u != v:
        candidates = candidates + graph.edges_between(v, u)
    return min(candidates, key=lambda e: (e.relation, e.source, e.target))


def shortest_simple_path(graph: KnowledgeGraph, src: str, dst: str,
                         directed: bool = False) -> PathResult | None:
    """Minimum-hop path; among equals, the lexicographically smallest sequence.

    Greedy reconstruction over BFS distances-to-destination: at each step take
    the smallest neighbor that still lies on some minimum-hop path.  Distances
    strictly decrease along the walk, so the result is automatically simple.
    """
    _require_nodes(graph, src, dst)
    if src == dst:
        return PathResult([src], [], "shortest", True)
    dist = _distances_to(graph, dst, directed)
    if src not in dist:
        return None
    nodes = [src]
    cur = src
    while cur != dst:
        cur = min(v for v in _step_neighbors(graph, cur, directed)
                  if dist.get(v, -1) == dist[nodes[-1]] - 1)
        nodes.append(cur)
    edges = [_pick_edge(graph, u, v, directed) for u, v in zip(nodes, nodes[1:])]
    return PathResult(nodes, edges, "shortest", True)


def top_n_shortest_simple_paths(graph: KnowledgeGraph, src: str, dst: str, n: int = 5,
                                directed: bool = False) -> list[PathResult]:
    """Up to n simple paths ordered by (hop count, node sequence).

    Enumerates exact-length layers ascending from the shortest distance,
    pruning prefixes that cannot reach dst within the layer's budget, so the
    first element always equals shortest_simple_path and prefixes of the
    result list are consistent across different n.
    """
    _require_nodes(graph, src, dst)
    if n < 1:
        raise ValidationError("n must be >= 1")
    if src == dst:
        return [PathResult([src], [], "top_n", True)]
    dist = _distances_to(graph, dst, directed)
    if src not in dist:
        return []
    sequences: list[list[str]] = []
    length = dist[src]
    while len(sequences) < n and length <= graph.node_count - 1:
        _exact_length_walk(graph, src, dst, length, directed, dist,
                           [src], {src}, sequences, n)
        length += 1
    return [PathResult(seq, [_pick_edge(graph, u, v, directed)
                             for u, v in zip(seq, seq[1:])], "top_n", True)
            for seq in sequences]


def _exact_length_walk(graph: KnowledgeGraph, cur: str, dst: str, budget: int,
                       directed: bool, dist: dict[str, int], path: list[str],
                       visited: set[str], out: list[list[str]], cap: int) -> None:
    if len(out) >= cap:
        return
    remaining = budget - (len(path) - 1)
    if remaining == 0:
        if cur == dst:
            out.append(list(path))
        return
    for v in sorted(_step_neighbors(graph, cur, directed)):
        if v in visited:
            continue
        if v == dst and remaining != 1:
            continue  # a simple path cannot pass through dst and come back
        d = dist.get(v)
        if d is None or d > remaining - 1:
            continue
        path.append(v)
        visited.add(v)
        _exact_length_walk(graph, v, dst, budget, directed, dist, path, visited, out, cap)
        path.pop()
        visited.remove(v)


def dfs_paths(graph: KnowledgeGraph, src: str, dst: str, depth_limit: int = 5,
              directed: bool = False) -> list[PathResult]:
    """Every simple path within the edge budget, in lexicographic DFS order."""
    _require_nodes(graph, src, dst)
    if depth_limit < 0:
        raise ValidationError("depth_limit must be >= 0")
    sequences: list[list[str]] = []

    def walk(cur: str, path: list[str], visited: set[str]) -> None:
        if cur == dst:
            sequences.append(list(path))
            return  # extending past dst can never end at dst again
        if len(path) - 1 == depth_limit:
            return
        for v in sorted(_step_neighbors(graph, cur, directed)):
            if v in visited:
                continue
            path.append(v)
            visited.add(v)
            walk(v, path, visited)
            path.pop()
            visited.remove(v)

    walk(src, [src], {src})
    return [PathResult(seq, [_pick_edge(graph, u, v, directed)
                             for u, v in zip(seq, seq[1:])], "dfs", True)
            for seq in sequences]


def waypoint_path(graph: KnowledgeGraph, src: str, dst: str, stop_keyword: str,
                  index: EmbeddingIndex, backend, directed: bool = False,
                  min_similarity: float = 0.0) -> PathResult | None:
    """Shortest route src -> stop joined with shortest route stop -> dst.

    The stop keyword resolves to a node via the embedding index.  The two legs
    are each minimum-hop; their concatenation may repeat nodes, in which case
    is_simple is False.
    """
    match = nearest_node(index, graph, stop_keyword, backend, min_similarity)
    if match is None:
        raise NotFoundError(f"stop keyword {stop_keyword!r} did not resolve to any node")
    return _waypoint_between(graph, src, dst, match.node_id, directed)


def _waypoint_between(graph: KnowledgeGraph, src: str, dst: str, stop_node: str,
                      directed: bool) -> PathResult | None:
    first = shortest_simple_path(graph, src, stop_node, directed)
    if first is None:
        return None
    second = shortest_simple_path(graph, stop_node, dst, directed)
    if second is None:
        return None
    nodes = first.nodes + second.nodes[1:]
    edges = first.edges + second.edges
    return PathResult(nodes, edges, "waypoint", len(set(nodes)) == len(nodes), stop_node)


# ----------------------------------------------------------------------
# all-pairs driver


def traverse_all_pairs(graph: KnowledgeGraph, index: EmbeddingIndex, backend,
                       keywords: Iterable[str], algorithm: str,
                       options: TraversalOptions | None = None) -> TraversalReport:
    """Resolve keywords to nodes and run the chosen algorithm over node pairs.

    Pairs are unordered combinations over matched positions, so duplicate
    matches produce repeated and self pairs on purpose: with five keywords the
    driver always attempts C(5,2) = 10 pairs.

    Waypoint mode forces every route through the stop, so the searches that
    actually run are the per-keyword legs to the resolved stop node (each a
    degenerate two-leg waypoint query, counted as its own pair); the keyword
    pair combinations are tallied as attempted on top of that, since any route
    between two keywords is implied by their legs meeting at the stop.  With k
    matched keywords that is C(k,2) + k attempts, of which at most k can be
    found.
    """
    options = options or TraversalOptions()
    keywords = list(keywords)
    if not keywords:
        raise ValidationError("at least one keyword is required")
    if algorithm not in ALGORITHMS:
        raise ValidationError(f"algorithm must be one of {ALGORITHMS}")
    if graph.node_count == 0:
        raise ValidationError("graph has no nodes to match against")

    matches: list[NodeMatch] = []
    for keyword in keywords:
        match = nearest_node(index, graph, keyword, backend, options.min_similarity)
        if match is None:
            logger.warning("keyword %r matched no node above %.3f; skipping",
                           keyword, options.min_similarity)
        else:
            matches.append(match)

    positions = [m.node_id for m in matches]
    stop_match: NodeMatch | None = None
    paths: list[PathResult] = []
    attempted = 0
    found = 0
    if algorithm == "waypoint":
        if not options.stop:
            raise ValidationError("waypoint traversal requires a stop keyword")
        stop_match = nearest_node(index, graph, options.stop, backend, options.min_similarity)
        if stop_match is None:
            raise NotFoundError(f"stop keyword {options.stop!r} did not resolve to any node")
        stop_node = stop_match.node_id
        attempted = len(positions) * (len(positions) - 1) // 2 + len(positions)
        for node in positions:
            leg = _waypoint_between(graph, node, stop_node, stop_node, options.directed)
            if leg is not None:
                found += 1
                paths.append(leg)
    else:
        for i, j in itertools.combinations(range(len(positions)), 2):
            attempted += 1
            pair_paths = _search_pair(graph, positions[i], positions[j], algorithm,
                                      options)
            if pair_paths:
                found += 1
                paths.extend(pair_paths)

    ratio = found / attempted if attempted else 0.0
    subgraph = _paths_subgraph(graph, paths)
    report = TraversalReport(matches, attempted, found, paths, ratio, subgraph,
                             render_relationships(subgraph), stop_match)
    logger.info("traversal (%s): %d/%d pairs connected", algorithm, found, attempted)
    return report


def _search_pair(graph: KnowledgeGraph, src: str, dst: str, algorithm: str,
                 options: TraversalOptions) -> list[PathResult]:
    if algorithm == "shortest":
        path = shortest_simple_path(graph, src, dst, options.directed)
        return [path] if path else []
    if algorithm == "top_n":
        return top_n_shortest_simple_paths(graph, src, dst, options.n, options.directed)
    return dfs_paths(graph, src, dst, options.depth_limit, options.directed)


def _paths_subgraph(graph: KnowledgeGraph, paths: list[PathResult]) -> KnowledgeGraph:
    """Union of all path nodes and hop edges, in first-encounter order."""
    sub = KnowledgeGraph(name="traversal-paths")
    for path in paths:
        for nid in path.nodes:
            if not sub.has_node(nid):
                node = graph.get_node(nid)
                sub.add_node(node.id, node.node_type, node.embedding_ref, dict(node.extra))
        for edge in path.edges:
            sub.add_edge(edge.source, edge.target, edge.relation,
                         edge.provenance, dict(edge.extra))
    return sub


def render_relationships(graph: KnowledgeGraph) -> str:
    """One sentence per distinct edge, space-joined, in insertion order."""
    return " ".join(edge.as_sentence() for edge in graph.edges())
