"""Embedding vectors, an exact-scan index, and keyword-to-node matching.

Vectors are 1-D numpy float64 arrays.  The index is a plain key -> vector map
persisted as JSON-lines of ``{"key": ..., "values": [...]}``; every vector in
one index shares a dimension.  Two backends are provided: a deterministic
token-hash embedder for offline use and tests, and an HTTP client for an
OpenAI-style ``/embeddings`` endpoint.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    IntegrityError,
    NotFoundError,
    TransportError,
    ValidationError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)

Vector = np.ndarray

_TOKEN_RE = re.compile(r"[0-9A-Za-z]+")


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """a.b / (|a| |b|).  Rejects mismatched dimensions and zero-norm inputs."""
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.ndim != 1 or vb.ndim != 1:
        raise ValidationError("cosine_similarity expects 1-D vectors")
    if va.shape[0] != vb.shape[0]:
        raise ValidationError(
            f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for a zero-norm vector")
    return float(np.dot(va, vb) / (na * nb))


class EmbeddingIndex:
    """Exact-scan vector index keyed by string.  Adding an existing key overwrites."""

    def __init__(self, dim: int | None = None):
        self.dim = dim
        self._entries: dict[str, Vector] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def keys(self) -> list[str]:
        return list(self._entries)

    def add(self, key: str, values: Sequence[float]) -> None:
        if not key:
            raise ValidationError("index key must be a non-empty string")
        vec = np.asarray(values, dtype=np.float64)
        if vec.ndim != 1:
            raise ValidationError("index vectors must be 1-D")
        if self.dim is None:
            self.dim = int(vec.shape[0])
        elif vec.shape[0] != self.dim:
            raise ValidationError(
                f"vector for {key!r} has dim {vec.shape[0]}, index holds dim {self.dim}")
        self._entries[key] = vec

    def get(self, key: str) -> Vector:
        try:
            return self._entries[key]
        except KeyError:
            raise NotFoundError(f"no embedding stored for key {key!r}") from None

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for key, vec in self._entries.items():
                fh.write(json.dumps({"key": key, "values": [float(x) for x in vec]},
                                    ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingIndex":
        index = cls()
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    index.add(rec["key"], rec["values"])
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValidationError(f"{path}:{lineno}: bad index record ({exc})") from exc
        return index


# ----------------------------------------------------------------------
# backends


class DeterministicEmbedder:
    """Offline embedder: each token hashes to a fixed pseudo-random unit vector.

    A text embeds to the normalized sum of its token vectors, so texts sharing
    tokens land near each other while the exact same string always reproduces
    the exact same vector, across processes and platforms.  Tokens are
    case-sensitive; hashing goes through sha256, never the salted builtin.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 2:
            raise ValidationError("embedding dim must be at least 2")
        self.dim = dim
        self.seed = seed
        self._token_cache: dict[str, Vector] = {}

    def _token_vector(self, token: str) -> Vector:
        vec = self._token_cache.get(token)
        if vec is None:
            raw = self._hash_floats(f"{self.seed}\x1f{token}")
            vec = raw / np.linalg.norm(raw)
            self._token_cache[token] = vec
        return vec

    def _hash_floats(self, material: str) -> Vector:
        out = np.empty(self.dim, dtype=np.float64)
        blob = b""
        counter = 0
        for i in range(self.dim):
            if len(blob) < 8:
                blob += hashlib.sha256(f"{material}\x1f{counter}".encode("utf-8")).digest()
                counter += 1
            chunk, blob = blob[:8], blob[8:]
            # map 64 hash bits onto [-1, 1); never all-zero in practice
            out[i] = int.from_bytes(chunk, "big") / 2 ** 63 - 1.0
        return out

    def embed(self, texts: Sequence[str]) -> list[Vector]:
        vectors = []
        for text in texts:
            if not text:
                raise ValidationError("cannot embed an empty string")
            tokens = _TOKEN_RE.findall(text) or [text]
            total = np.zeros(self.dim, dtype=np.float64)
            for token in tokens:
                total += self._token_vector(token)
            norm = float(np.linalg.norm(total))
            if norm == 0.0:  # astronomically unlikely cancellation
                total = self._token_vector(tokens[0]).copy()
                norm = float(np.linalg.norm(total))
            vectors.append(total / norm)
        return vectors


class HttpEmbeddingBackend:
    """Client for an OpenAI-compatible embeddings endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries

    def embed(self, texts: Sequence[str]) -> list[Vector]:
        import requests

        for text in texts:
            if not text:
                raise ValidationError("cannot embed an empty string")
        payload = {"model": self.model, "input": list(texts)}
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_exc: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(f"{self.base_url}/embeddings", json=payload,
                                     headers=headers, timeout=self.timeout)
                if resp.status_code >= 500:
                    raise TransportError(f"embedding server returned {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()["data"]
                data = sorted(data, key=lambda item: item.get("index", 0))
                vectors = [np.asarray(item["embedding"], dtype=np.float64) for item in data]
                if len(vectors) != len(texts):
                    raise TransportError(
                        f"expected {len(texts)} embeddings, got {len(vectors)}")
                return vectors
            except (TransportError, requests.RequestException, KeyError, ValueError) as exc:
                last_exc = exc
                if attempt + 1 < self.max_retries:
                    time.sleep(0.5 * 2 ** attempt)
        raise TransportError(f"embedding request failed after {self.max_retries} attempts",
                             cause=last_exc)


def embed_text(backend, text: str) -> Vector:
    """Embed one string through any backend; rejects empty input."""
    if not text:
        raise ValidationError("cannot embed an empty string")
    return backend.embed([text])[0]


def embed_many(backend, texts: Sequence[str]) -> list[Vector]:
    if not texts:
        return []
    return backend.embed(list(texts))


# ----------------------------------------------------------------------
# keyword -> node matching


@dataclass(slots=True)
class NodeMatch:
    query: str
    node_id: str
    similarity: float


def nearest_node(index: EmbeddingIndex, graph, keyword: str, backend,
                 min_similarity: float = 0.0) -> NodeMatch | None:
    """Graph node maximizing cosine similarity to the embedded keyword.

    Ties break toward the lexicographically smaller node id.  Returns None when
    the best similarity falls below min_similarity.  Every graph node must have
    an embedding in the index.
    """
    query_vec = embed_text(backend, keyword)
    node_ids = sorted(graph.node_ids())
    if not node_ids:
        return None
    missing = [nid for nid in node_ids if nid not in index]
    if missing:
        raise IntegrityError(f"nodes lack embeddings: {missing[:5]!r}"
                             + (" ..." if len(missing) > 5 else ""))
    matrix = np.stack([index.get(nid) for nid in node_ids])
    norms = np.linalg.norm(matrix, axis=1)
    if np.any(norms == 0.0):
        bad = node_ids[int(np.argmax(norms == 0.0))]
        raise ZeroVectorError(f"stored embedding for {bad!r} has zero norm")
    qnorm = float(np.linalg.norm(query_vec))
    if qnorm == 0.0:
        raise ZeroVectorError("query embedded to a zero-norm vector")
    sims = (matrix @ query_vec) / (norms * qnorm)
    best = int(np.argmax(sims))  # first max wins; node_ids is sorted, so ties go lexicographic
    best_sim = float(sims[best])
    if best_sim < min_similarity:
        return None
    return NodeMatch(keyword, node_ids[best], best_sim)
