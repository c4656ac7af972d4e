"""Template rendering and the scripted / HTTP chat backends."""

import json

import pytest
import requests

import kgidea.llm as llm_mod
from kgidea.errors import ScriptError, TransportError, ValidationError
from kgidea.llm import (
    HttpChatBackend,
    ScriptedChatBackend,
    load_template,
    render_template,
)


# ---------------------------------------------------------------------------
# templates

def test_render_template_replaces_known_markers_only():
    out = render_template("Q: {QUERY}\nK: {K}\nkeep {UNKNOWN}", QUERY="a b", K="5")
    assert out == "Q: a b\nK: 5\nkeep {UNKNOWN}"


def test_render_template_values_are_literal():
    assert render_template("{A}", A="{ not a marker }") == "{ not a marker }"


def test_load_template_package_and_override(tmp_path):
    packaged = load_template("planner.txt")
    assert "{QUERY}" in packaged
    (tmp_path / "planner.txt").write_text("override {QUERY}")
    assert load_template("planner.txt", tmp_path) == "override {QUERY}"
    # override dir without the file falls back to the packaged copy
    assert load_template("hybrid.txt", tmp_path) == load_template("hybrid.txt")


def test_load_template_missing_name():
    with pytest.raises(ValidationError):
        load_template("no-such-template.txt")


# ---------------------------------------------------------------------------
# scripted backend

def test_scripted_backend_replays_in_order_and_records_calls():
    backend = ScriptedChatBackend(["one", "two"])
    assert backend.complete([{"role": "user", "content": "p1"}]) == "one"
    assert backend.complete([{"role": "user", "content": "p2"}]) == "two"
    assert backend.call_count == 2
    assert backend.calls[0][0]["content"] == "p1"
    with pytest.raises(ScriptError):
        backend.complete([{"role": "user", "content": "p3"}])


def test_scripted_backend_records_copies():
    backend = ScriptedChatBackend(["ok"])
    message = {"role": "user", "content": "original"}
    backend.complete([message])
    message["content"] = "mutated"
    assert backend.calls[0][0]["content"] == "original"


def test_scripted_backend_callable_mode():
    backend = ScriptedChatBackend(lambda messages: messages[-1]["content"].upper())
    assert backend.complete([{"role": "user", "content": "shout"}]) == "SHOUT"
    assert backend.complete([{"role": "user", "content": "again"}]) == "AGAIN"


# ---------------------------------------------------------------------------
# HTTP backend (requests.post monkeypatched; no sockets touched)

class FakeResponse:
    def __init__(self, status_code=200, body=None):
        self.status_code = status_code
        self._body = body or {}

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests.HTTPError(f"status {self.status_code}")

    def json(self):
        return self._body


def _chat_body(content="hello"):
    return {"choices": [{"message": {"content": content}}]}


def test_http_chat_payload_shape(monkeypatch):
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen.update(url=url, payload=json, headers=headers, timeout=timeout)
        return FakeResponse(body=_chat_body("reply"))

    monkeypatch.setattr(requests, "post", fake_post)
    backend = HttpChatBackend("http://llm.local/v1/", "some-model",
                              api_key="sekrit", max_tokens=128)
    out = backend.complete([{"role": "user", "content": "hi"}])
    assert out == "reply"
    assert seen["url"] == "http://llm.local/v1/chat/completions"
    assert seen["payload"]["model"] == "some-model"
    assert seen["payload"]["messages"] == [{"role": "user", "content": "hi"}]
    assert seen["payload"]["temperature"] == 0.0
    assert seen["payload"]["max_tokens"] == 128
    assert seen["headers"]["Authorization"] == "Bearer sekrit"


def test_http_chat_omits_optional_fields(monkeypatch):
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen.update(payload=json, headers=headers)
        return FakeResponse(body=_chat_body())

    monkeypatch.setattr(requests, "post", fake_post)
    HttpChatBackend("http://llm.local", "m").complete([{"role": "user", "content": "x"}])
    assert "max_tokens" not in seen["payload"]
    assert "Authorization" not in seen["headers"]


def test_http_chat_retries_server_errors(monkeypatch):
    responses = [FakeResponse(status_code=503), FakeResponse(body=_chat_body("ok"))]
    calls = []

    monkeypatch.setattr(llm_mod.time, "sleep", lambda s: calls.append(s))
    monkeypatch.setattr(requests, "post",
                        lambda *a, **k: responses.pop(0))
    backend = HttpChatBackend("http://llm.local", "m", max_retries=3)
    assert backend.complete([{"role": "user", "content": "x"}]) == "ok"
    assert calls == [0.5]  # one backoff between the two attempts


def test_http_chat_gives_up_after_max_retries(monkeypatch):
    monkeypatch.setattr(llm_mod.time, "sleep", lambda s: None)
    monkeypatch.setattr(requests, "post", lambda *a, **k: FakeResponse(status_code=500))
    backend = HttpChatBackend("http://llm.local", "m", max_retries=2)
    with pytest.raises(TransportError):
        backend.complete([{"role": "user", "content": "x"}])


def test_http_chat_retries_malformed_bodies(monkeypatch):
    monkeypatch.setattr(llm_mod.time, "sleep", lambda s: None)
    monkeypatch.setattr(requests, "post",
                        lambda *a, **k: FakeResponse(body={"nope": True}))
    with pytest.raises(TransportError):
        HttpChatBackend("http://llm.local", "m", max_retries=2).complete(
            [{"role": "user", "content": "x"}])


def test_http_chat_requires_base_url():
    with pytest.raises(ValidationError):
        HttpChatBackend("", "m")


def test_http_chat_per_call_overrides(monkeypatch):
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen.update(payload=json)
        return FakeResponse(body=_chat_body())

    monkeypatch.setattr(requests, "post", fake_post)
    backend = HttpChatBackend("http://llm.local", "m", temperature=0.2, max_tokens=64)
    backend.complete([{"role": "user", "content": "x"}], temperature=0.9, max_tokens=7)
    assert seen["payload"]["temperature"] == 0.9
    assert seen["payload"]["max_tokens"] == 7
