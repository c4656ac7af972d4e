"""Config files, environment fallbacks, and backend assembly."""

import json

import pytest

from kgidea.config import (
    DEFAULT_CONTEXT_BUDGET,
    RunConfig,
    assemble_pipeline_config,
    build_chat_backend,
    build_embedder,
    load_config,
)
from kgidea.embedding import DeterministicEmbedder, HttpEmbeddingBackend
from kgidea.errors import ValidationError
from kgidea.llm import HttpChatBackend, ScriptedChatBackend

import fixture_data


def test_defaults():
    config = RunConfig()
    assert config.k == config.n == config.depth == 5
    assert config.threshold == 0.95
    assert config.seed == 0
    assert config.query_mode == "concatenated"
    assert config.context_budget == DEFAULT_CONTEXT_BUDGET
    assert config.jobs == 1
    assert config.llm == {"mode": "http"}
    assert config.judge == {"mode": "http"}
    assert config.embedder == {"mode": "deterministic"}
    assert config.domain_graph is None and config.rubric is None


@pytest.mark.parametrize("kwargs", [
    {"k": 0}, {"n": 0}, {"depth": -1}, {"jobs": 0},
    {"threshold": 0.0}, {"threshold": 1.2},
    {"context_budget": 0},
    {"query_mode": "blended"},
    {"llm": "http"}, {"judge": {}},
])
def test_validation_rejects(kwargs):
    with pytest.raises(ValidationError):
        RunConfig(**kwargs)


def test_threshold_one_is_allowed():
    assert RunConfig(threshold=1.0).threshold == 1.0


# ---------------------------------------------------------------------------
# file loading

def _write_config(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_load_config_resolves_relative_paths(tmp_path):
    graph = fixture_data.build_property_graph()
    graph.save(tmp_path / "graph.jsonl")
    (tmp_path / "templates").mkdir()
    path = _write_config(tmp_path, {
        "domain_graph": "graph.jsonl",
        "template_dir": "templates",
        "k": 3,
        "llm": {"mode": "scripted", "responses": ["ok"]},
    })
    config = load_config(path)
    assert config.domain_graph == str(tmp_path / "graph.jsonl")
    assert config.template_dir == str(tmp_path / "templates")
    assert config.k == 3 and config.n == 5  # untouched fields keep defaults


def test_load_config_errors(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        load_config(tmp_path / "absent.json")

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValidationError, match="not valid JSON"):
        load_config(bad)

    bad.write_text(json.dumps([1, 2]))
    with pytest.raises(ValidationError, match="JSON object"):
        load_config(bad)

    with pytest.raises(ValidationError, match="unknown config keys.*top_k"):
        load_config(_write_config(tmp_path, {"top_k": 5}))

    with pytest.raises(ValidationError, match="domain_graph does not exist"):
        load_config(_write_config(tmp_path, {"domain_graph": "nope.jsonl"}))


def test_load_config_resolves_script_paths(tmp_path):
    (tmp_path / "replies.json").write_text(json.dumps(["a", "b"]))
    config = load_config(_write_config(tmp_path, {
        "llm": {"mode": "scripted", "script": "replies.json"},
    }))
    assert config.llm["script"] == str(tmp_path / "replies.json")

    with pytest.raises(ValidationError, match="script does not exist"):
        load_config(_write_config(tmp_path, {
            "judge": {"mode": "scripted", "script": "missing.json"},
        }))


# ---------------------------------------------------------------------------
# backend builders

def test_scripted_chat_backend_from_inline_and_file(tmp_path):
    backend = build_chat_backend({"mode": "scripted", "responses": ["one", "two"]})
    assert isinstance(backend, ScriptedChatBackend)
    assert backend.complete([{"role": "user", "content": "hi"}]) == "one"

    script = tmp_path / "script.json"
    script.write_text(json.dumps(["from file"]))
    backend = build_chat_backend({"mode": "scripted", "script": str(script)})
    assert backend.complete([{"role": "user", "content": "hi"}]) == "from file"


@pytest.mark.parametrize("spec", [
    {"mode": "scripted"},
    {"mode": "scripted", "responses": "not a list"},
    {"mode": "scripted", "responses": ["ok", 3]},
    {"mode": "teleprompter"},
])
def test_chat_backend_spec_errors(spec):
    with pytest.raises(ValidationError):
        build_chat_backend(spec)


def test_http_chat_backend_from_spec(monkeypatch):
    for name in ("LLM_API_BASE", "LLM_MODEL", "LLM_API_KEY"):
        monkeypatch.delenv(name, raising=False)
    backend = build_chat_backend({
        "mode": "http", "base_url": "http://llm.local/v1/", "model": "m1",
        "api_key": "sk-zzz", "temperature": 0.7, "max_tokens": 256,
    })
    assert isinstance(backend, HttpChatBackend)
    assert backend.base_url == "http://llm.local/v1"
    assert backend.model == "m1"
    assert backend.api_key == "sk-zzz"
    assert backend.temperature == 0.7
    assert backend.max_tokens == 256


def test_http_chat_backend_env_fallback(monkeypatch):
    monkeypatch.setenv("LLM_API_BASE", "http://env.local/v1")
    monkeypatch.setenv("LLM_MODEL", "env-model")
    monkeypatch.setenv("LLM_API_KEY", "sk-env")
    backend = build_chat_backend({"mode": "http"})
    assert (backend.base_url, backend.model, backend.api_key) == \
        ("http://env.local/v1", "env-model", "sk-env")

    # explicit config values beat the environment
    backend = build_chat_backend({"mode": "http", "model": "explicit"})
    assert backend.model == "explicit"
    assert backend.base_url == "http://env.local/v1"


def test_judge_role_reads_its_own_env(monkeypatch):
    for name in ("LLM_API_BASE", "LLM_MODEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("JUDGE_API_BASE", "http://judge.local")
    monkeypatch.setenv("JUDGE_MODEL", "judge-model")
    monkeypatch.setenv("LLM_API_KEY", "sk-shared")
    backend = build_chat_backend({"mode": "http"}, "judge")
    assert (backend.base_url, backend.model, backend.api_key) == \
        ("http://judge.local", "judge-model", "sk-shared")
    # the llm role must not see judge variables
    with pytest.raises(ValidationError, match="LLM_API_BASE"):
        build_chat_backend({"mode": "http"}, "llm")


def test_embedder_builders(monkeypatch):
    default = build_embedder({"mode": "deterministic"}, seed=9)
    assert isinstance(default, DeterministicEmbedder)
    assert default.dim == 64 and default.seed == 9
    tuned = build_embedder({"mode": "deterministic", "dim": 16, "seed": 3})
    assert tuned.dim == 16 and tuned.seed == 3

    monkeypatch.setenv("EMBED_API_BASE", "http://embed.local")
    monkeypatch.setenv("EMBED_MODEL", "embed-model")
    http = build_embedder({"mode": "http"})
    assert isinstance(http, HttpEmbeddingBackend)
    assert http.base_url == "http://embed.local"
    assert http.model == "embed-model"

    with pytest.raises(ValidationError):
        build_embedder({"mode": "psychic"})


# ---------------------------------------------------------------------------
# pipeline assembly

def test_assemble_pipeline_config_loads_artifacts(tmp_path):
    embedder = fixture_data.property_embedder()
    graph = fixture_data.build_property_graph()
    store = fixture_data.build_property_store(embedder)
    index = fixture_data.build_index(graph, embedder)
    graph.save(tmp_path / "graph.jsonl")
    store.save(tmp_path / "chunks.jsonl")
    index.save(tmp_path / "index.jsonl")
    config = load_config(_write_config(tmp_path, {
        "domain_graph": "graph.jsonl",
        "concept_graph": "graph.jsonl",
        "chunk_store": "chunks.jsonl",
        "concept_index": "index.jsonl",
        "llm": {"mode": "scripted", "responses": ["ok"]},
        "k": 2, "n": 4, "depth": 6, "jobs": 2,
        "query_mode": "subquestion_only",
        "context_budget": 512,
    }))
    pipeline = assemble_pipeline_config(config, algorithm="dfs", stop="Sterilization")
    assert isinstance(pipeline.llm, ScriptedChatBackend)
    assert pipeline.domain_graph.node_ids() == graph.node_ids()
    assert pipeline.concept_graph.node_ids() == graph.node_ids()
    assert sorted(pipeline.chunk_store.chunk_ids()) == sorted(store.chunk_ids())
    assert sorted(pipeline.concept_index.keys()) == sorted(index.keys())
    assert pipeline.algorithm == "dfs"
    assert pipeline.options.n == 4
    assert pipeline.options.depth_limit == 6
    assert pipeline.options.stop == "Sterilization"
    assert pipeline.k == 2 and pipeline.jobs == 2
    assert pipeline.query_mode == "subquestion_only"
    assert pipeline.context_budget == 512


def test_assemble_without_artifacts_leaves_gaps():
    config = RunConfig(llm={"mode": "scripted", "responses": []})
    pipeline = assemble_pipeline_config(config)
    assert pipeline.chunk_store is None
    assert pipeline.domain_graph is None
    assert pipeline.concept_graph is None
    assert pipeline.concept_index is None
    assert pipeline.algorithm == "shortest"
