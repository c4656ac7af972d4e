"""Concept graphs distilled from text, plus the agents that reason over them.

The package splits into three layers: graph construction (ingestion,
graph, embedding, merging, building), exploration (traversal, retrieval),
and the agent pipeline on top (agents, ablation).  ``config`` and ``cli``
wire everything together for command line use.
"""

from .ablation import AblationConfig, AblationReport, ablation_configs, run_ablation
from .agents import (
    AgentMessage,
    PipelineConfig,
    PipelineTranscript,
    StageFlags,
    run_pipeline,
)
from .building import build_graph, load_corpus
from .config import RunConfig, assemble_pipeline_config, load_config
from .embedding import (
    DeterministicEmbedder,
    EmbeddingIndex,
    cosine_similarity,
    nearest_node,
)
from .errors import (
    ExtractionFailedError,
    GraphParseError,
    IntegrityError,
    JudgeError,
    KgError,
    NotFoundError,
    ScriptError,
    StageError,
    TransportError,
    ValidationError,
    ZeroVectorError,
)
from .graph import EdgeRecord, KnowledgeGraph, NodeRecord
from .ingestion import Chunk, chunk_document, compose_document_graph, extract_fragment
from .llm import HttpChatBackend, ScriptedChatBackend, load_template, render_template
from .merging import MergePolicy, MergeReport, integrate, merge_pass
from .retrieval import ChunkStore, Evidence, hybrid_evidence, retrieve_top_k
from .traversal import (
    PathResult,
    TraversalOptions,
    TraversalReport,
    dfs_paths,
    shortest_simple_path,
    top_n_shortest_simple_paths,
    traverse_all_pairs,
    waypoint_path,
)

__version__ = "0.1.0"

__all__ = [
    "AblationConfig",
    "AblationReport",
    "AgentMessage",
    "Chunk",
    "ChunkStore",
    "DeterministicEmbedder",
    "EdgeRecord",
    "EmbeddingIndex",
    "Evidence",
    "ExtractionFailedError",
    "GraphParseError",
    "HttpChatBackend",
    "IntegrityError",
    "JudgeError",
    "KgError",
    "KnowledgeGraph",
    "MergePolicy",
    "MergeReport",
    "NodeRecord",
    "NotFoundError",
    "PathResult",
    "PipelineConfig",
    "PipelineTranscript",
    "RunConfig",
    "ScriptError",
    "ScriptedChatBackend",
    "StageError",
    "StageFlags",
    "TransportError",
    "TraversalOptions",
    "TraversalReport",
    "ValidationError",
    "ZeroVectorError",
    "ablation_configs",
    "assemble_pipeline_config",
    "build_graph",
    "chunk_document",
    "compose_document_graph",
    "cosine_similarity",
    "dfs_paths",
    "extract_fragment",
    "hybrid_evidence",
    "integrate",
    "load_config",
    "load_corpus",
    "load_template",
    "merge_pass",
    "nearest_node",
    "render_template",
    "retrieve_top_k",
    "run_ablation",
    "run_pipeline",
    "shortest_simple_path",
    "top_n_shortest_simple_paths",
    "traverse_all_pairs",
    "waypoint_path",
]
