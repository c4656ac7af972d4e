"""Chat-completion backends and prompt template handling.

Both backends expose ``complete(messages, temperature=..., max_tokens=...) ->
str``.  The scripted backend replays a fixed response list so every higher
layer can run offline and deterministically; the HTTP backend speaks the
OpenAI-style ``/chat/completions`` wire shape::

    {"model": ..., "messages": [{"role": ..., "content": ...}], "temperature": ..., "max_tokens": ...}

Templates are plain text files with ``{PLACEHOLDER}`` markers substituted by
literal replacement (not str.format, so JSON braces in templates stay inert).
"""

from __future__ import annotations

import logging
import threading
import time
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

from .errors import ScriptError, TransportError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0


def render_template(template: str, **values: str) -> str:
    """Replace each {NAME} placeholder with its value; unknown markers are left alone."""
    out = template
    for name, value in values.items():
        out = out.replace("{" + name + "}", value)
    return out


def load_template(name: str, override_dir: str | Path | None = None) -> str:
    """Read a template by file name, preferring an override directory."""
    if override_dir is not None:
        candidate = Path(override_dir) / name
        if candidate.exists():
            return candidate.read_text(encoding="utf-8")
    ref = resources.files("kgidea").joinpath("templates", name)
    try:
        return ref.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"no template named {name!r}") from None


class ScriptedChatBackend:
    """Replays canned responses in call order; used for tests and offline runs.

    Accepts either a list of response strings or a callable mapping the
    message list to a response.  Every prompt is recorded in ``calls``.
    """

    def __init__(self, script: Sequence[str] | Callable[[list[dict]], str]):
        self._responder = script if callable(script) else None
        self._responses = None if callable(script) else list(script)
        self._cursor = 0
        self._lock = threading.Lock()
        self.calls: list[list[dict]] = []

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def complete(self, messages: list[dict], temperature: float = DEFAULT_TEMPERATURE,
                 max_tokens: int | None = None) -> str:
        del temperature, max_tokens  # replay ignores sampling knobs
        with self._lock:
            self.calls.append([dict(m) for m in messages])
            if self._responder is not None:
                return self._responder(messages)
            if self._cursor >= len(self._responses):
                raise ScriptError(
                    f"scripted backend exhausted after {len(self._responses)} responses")
            response = self._responses[self._cursor]
            self._cursor += 1
            return response


class HttpChatBackend:
    """Client for an OpenAI-compatible chat endpoint with bounded retries."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        temperature: float = DEFAULT_TEMPERATURE,
        max_tokens: int | None = None,
        timeout: float = 120.0,
        max_retries: int = 3,
    ):
        if not base_url:
            raise ValidationError("base_url must be set for the HTTP chat backend")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.timeout = timeout
        self.max_retries = max_retries

    def complete(self, messages: list[dict], temperature: float | None = None,
                 max_tokens: int | None = None) -> str:
        import requests

        payload: dict = {
            "model": self.model,
            "messages": list(messages),
            "temperature": self.temperature if temperature is None else temperature,
        }
        tokens = self.max_tokens if max_tokens is None else max_tokens
        if tokens is not None:
            payload["max_tokens"] = tokens
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(f"{self.base_url}/chat/completions", json=payload,
                                     headers=headers, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise TransportError(f"chat server returned {resp.status_code}")
                resp.raise_for_status()
                body = resp.json()
                return body["choices"][0]["message"]["content"]
            except (TransportError, requests.RequestException, KeyError,
                    IndexError, ValueError) as exc:
                last_exc = exc
                logger.warning("chat request attempt %d/%d failed: %s",
                               attempt + 1, self.max_retries, exc)
                if attempt + 1 < self.max_retries:
                    time.sleep(0.5 * 2 ** attempt)
        raise TransportError(f"chat request failed after {self.max_retries} attempts",
                             cause=last_exc)
