"""Run configuration: JSON config files, environment fallbacks, backend builders.

A config file names the on-disk inputs (graphs, chunk store, index, templates)
and describes the three backends (chat, judge, embedder) as small spec dicts.
Explicit config values win; environment variables fill the gaps for HTTP
endpoints.  Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .agents import QUERY_MODES, PipelineConfig
from .embedding import DeterministicEmbedder, EmbeddingIndex, HttpEmbeddingBackend
from .errors import ValidationError
from .graph import KnowledgeGraph
from .llm import DEFAULT_TEMPERATURE, HttpChatBackend, ScriptedChatBackend
from .retrieval import ChunkStore
from .traversal import TraversalOptions

logger = logging.getLogger(__name__)

# defaults mirror the package-wide constants: top-k 5, top-N 5, search depth 5,
# merge threshold 0.95, seed 0
DEFAULT_K = 5
DEFAULT_N = 5
DEFAULT_DEPTH = 5
DEFAULT_THRESHOLD = 0.95
DEFAULT_SEED = 0
DEFAULT_CONTEXT_BUDGET = 40000

ENV_BY_ROLE = {
    "llm": ("LLM_API_BASE", "LLM_MODEL", "LLM_API_KEY"),
    "judge": ("JUDGE_API_BASE", "JUDGE_MODEL", "LLM_API_KEY"),
    "embed": ("EMBED_API_BASE", "EMBED_MODEL", "LLM_API_KEY"),
}

_PATH_FIELDS = ("domain_graph", "concept_graph", "chunk_store", "concept_index",
                "template_dir", "rubric")


@dataclass(slots=True)
class RunConfig:
    """Validated contents of a config file; paths are absolute after load."""

    domain_graph: str | None = None
    concept_graph: str | None = None
    chunk_store: str | None = None
    concept_index: str | None = None
    template_dir: str | None = None
    rubric: str | None = None
    llm: dict[str, Any] = field(default_factory=lambda: {"mode": "http"})
    judge: dict[str, Any] = field(default_factory=lambda: {"mode": "http"})
    embedder: dict[str, Any] = field(default_factory=lambda: {"mode": "deterministic"})
    k: int = DEFAULT_K
    n: int = DEFAULT_N
    depth: int = DEFAULT_DEPTH
    threshold: float = DEFAULT_THRESHOLD
    seed: int = DEFAULT_SEED
    query_mode: str = "concatenated"
    context_budget: int = DEFAULT_CONTEXT_BUDGET
    jobs: int = 1

    def __post_init__(self) -> None:
        for name in ("k", "n", "depth", "jobs"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not 0.0 < self.threshold <= 1.0:
            raise ValidationError("threshold must be in (0, 1]")
        if self.context_budget < 1:
            raise ValidationError("context_budget must be >= 1")
        if self.query_mode not in QUERY_MODES:
            raise ValidationError(f"query_mode must be one of {QUERY_MODES}")
        for role in ("llm", "judge", "embedder"):
            spec = getattr(self, role)
            if not isinstance(spec, dict) or "mode" not in spec:
                raise ValidationError(f"{role} spec must be a dict with a 'mode'")


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file is not valid JSON: {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    config = RunConfig(**data)
    base = path.parent
    for name in _PATH_FIELDS:
        value = getattr(config, name)
        if value is None:
            continue
        resolved = (base / value).resolve() if not os.path.isabs(value) else Path(value)
        if not resolved.exists():
            raise ValidationError(f"config path {name} does not exist: {resolved}")
        setattr(config, name, str(resolved))
    for role in ("llm", "judge"):
        spec = getattr(config, role)
        script = spec.get("script")
        if isinstance(script, str) and not os.path.isabs(script):
            resolved = (base / script).resolve()
            if not resolved.exists():
                raise ValidationError(f"{role} script does not exist: {resolved}")
            spec["script"] = str(resolved)
    return config


# ----------------------------------------------------------------------
# backend construction


def _env_or(spec: dict[str, Any], key: str, env_name: str | None) -> str | None:
    value = spec.get(key)
    if value is not None:
        return str(value)
    if env_name:
        return os.environ.get(env_name)
    return None


def _script_responses(spec: dict[str, Any], role: str) -> list[str]:
    if isinstance(spec.get("responses"), list):
        responses = spec["responses"]
    elif isinstance(spec.get("script"), str):
        responses = json.loads(Path(spec["script"]).read_text(encoding="utf-8"))
    else:
        raise ValidationError(
            f"scripted {role} backend needs 'responses' (inline list) or 'script' (path)")
    if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
        raise ValidationError(f"scripted {role} responses must be a list of strings")
    return responses


def build_chat_backend(spec: dict[str, Any], role: str = "llm"):
    """A chat backend from a spec dict: {'mode': 'scripted' | 'http', ...}."""
    mode = spec.get("mode")
    if mode == "scripted":
        return ScriptedChatBackend(_script_responses(spec, role))
    if mode == "http":
        base_env, model_env, key_env = ENV_BY_ROLE.get(role, ENV_BY_ROLE["llm"])
        base_url = _env_or(spec, "base_url", base_env)
        model = _env_or(spec, "model", model_env)
        if not base_url or not model:
            raise ValidationError(
                f"http {role} backend needs base_url and model "
                f"(config keys or {base_env}/{model_env})")
        return HttpChatBackend(
            base_url, model,
            api_key=_env_or(spec, "api_key", key_env),
            temperature=float(spec.get("temperature", DEFAULT_TEMPERATURE)),
            max_tokens=spec.get("max_tokens"),
            timeout=float(spec.get("timeout", 120.0)),
            max_retries=int(spec.get("max_retries", 3)))
    raise ValidationError(f"{role} mode must be 'scripted' or 'http', got {mode!r}")


def build_embedder(spec: dict[str, Any], seed: int = DEFAULT_SEED):
    """An embedding backend: {'mode': 'deterministic' | 'http', ...}."""
    mode = spec.get("mode")
    if mode == "deterministic":
        return DeterministicEmbedder(dim=int(spec.get("dim", 64)),
                                     seed=int(spec.get("seed", seed)))
    if mode == "http":
        base_env, model_env, key_env = ENV_BY_ROLE["embed"]
        base_url = _env_or(spec, "base_url", base_env)
        model = _env_or(spec, "model", model_env)
        if not base_url or not model:
            raise ValidationError(
                "http embedder needs base_url and model "
                f"(config keys or {base_env}/{model_env})")
        return HttpEmbeddingBackend(base_url, model,
                                    api_key=_env_or(spec, "api_key", key_env),
                                    timeout=float(spec.get("timeout", 60.0)),
                                    max_retries=int(spec.get("max_retries", 3)))
    raise ValidationError(f"embedder mode must be 'deterministic' or 'http', got {mode!r}")


def assemble_pipeline_config(config: RunConfig, *, algorithm: str = "shortest",
                             stop: str | None = None) -> PipelineConfig:
    """Load every referenced artifact and wire up a ready-to-run PipelineConfig."""
    llm = build_chat_backend(config.llm, "llm")
    embedder = build_embedder(config.embedder, config.seed)
    chunk_store = ChunkStore.load(config.chunk_store) if config.chunk_store else None
    domain_graph = (KnowledgeGraph.load(config.domain_graph)
                    if config.domain_graph else None)
    concept_graph = (KnowledgeGraph.load(config.concept_graph)
                     if config.concept_graph else None)
    concept_index = (EmbeddingIndex.load(config.concept_index)
                     if config.concept_index else None)
    options = TraversalOptions(n=config.n, depth_limit=config.depth, stop=stop)
    return PipelineConfig(
        llm=llm, embedder=embedder, chunk_store=chunk_store,
        domain_graph=domain_graph, concept_graph=concept_graph,
        concept_index=concept_index, algorithm=algorithm, options=options,
        k=config.k, query_mode=config.query_mode,
        context_budget=config.context_budget, template_dir=config.template_dir,
        jobs=config.jobs)
