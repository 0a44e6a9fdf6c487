"""Boundary contracts for the LLM, embedder, and classifier backends, with
deterministic mock implementations and HTTP clients.

The pipeline only ever talks to these ports; concrete backends are chosen at
the CLI boundary. Mocks make the whole engine hermetic: the mock LLM replays
scripted replies per prompt tag, and the hash embedder turns token overlap
into cosine similarity.

All ports are safe for concurrent calls. With ``decode="json"`` every
implementation re-asks once with the parse error appended before raising
DecodeError, so callers can rely on syntactically valid JSON.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np
import requests

from .errors import (
    AuthError,
    DecodeError,
    DimensionMismatch,
    HttpStatusError,
    MissingScriptEntry,
    TimeoutError_,
)
from .pillars import PillarId
from .textnorm import tokenize

logger = logging.getLogger(__name__)

TEXT_TABLE_SPACE = "text_table"
IMAGE_SPACE = "image"


@dataclass(frozen=True)
class EmbeddingSpec:
    space: str  # text_table | image
    dim: int = 256
    normalized: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")


@runtime_checkable
class LlmPort(Protocol):
    def complete(self, prompt: str, decode: str = "free_text", tag: Optional[str] = None) -> str:
        """Return the model completion. ``tag`` names the prompt template the
        caller rendered; mocks key their scripts on it, clients ignore it."""
        ...


@runtime_checkable
class EmbedderPort(Protocol):
    spec: EmbeddingSpec

    def embed(self, payload: str) -> np.ndarray: ...


@runtime_checkable
class ClassifierPort(Protocol):
    def classify(self, augmented_body: str) -> set[PillarId]: ...


@dataclass(frozen=True)
class CallRecord:
    tag: Optional[str]
    decode: str
    prompt: str
    reply: Optional[str]
    error: Optional[str] = None


def _decode_json_with_repair(ask: Callable[[str], str], prompt: str) -> str:
    """Run ``ask``; if the reply is not valid JSON, re-ask once with the
    parse error appended, then fail."""
    reply = ask(prompt)
    try:
        json.loads(reply)
        return reply
    except json.JSONDecodeError as exc:
        repair_prompt = (
            f"{prompt}\n\nYour previous reply was not valid JSON "
            f"({exc}). Reply again with valid JSON only."
        )
        reply = ask(repair_prompt)
        try:
            json.loads(reply)
            return reply
        except json.JSONDecodeError as exc2:
            raise DecodeError(f"reply is not valid JSON after one repair: {exc2}") from exc2


class MockLlm:
    """Scripted LLM: replies are dequeued per prompt tag; an exhausted queue
    repeats its last entry. Queue entries may be exceptions, which are raised
    when dequeued. A full call transcript is kept for assertions."""

    def __init__(self, script: dict[str, Sequence], default: Optional[Sequence] = None):
        self._queues: dict[str, list] = {}
        for tag, entries in script.items():
            if isinstance(entries, (str, Exception)) or not isinstance(entries, Sequence):
                entries = [entries]
            self._queues[tag] = list(entries)
        self._default = list(default) if default is not None else None
        self._positions: dict[str, int] = {}
        self._lock = threading.Lock()
        self.transcript: list[CallRecord] = []

    def _next(self, tag: str):
        queue = self._queues.get(tag)
        if queue is None:
            if self._default is None:
                raise MissingScriptEntry(f"no script entry or default for tag {tag!r}")
            queue, tag = self._default, "__default__"
        pos = self._positions.get(tag, 0)
        entry = queue[min(pos, len(queue) - 1)]
        self._positions[tag] = pos + 1
        return entry

    def complete(self, prompt: str, decode: str = "free_text", tag: Optional[str] = None) -> str:
        def ask(p: str) -> str:
            with self._lock:
                try:
                    entry = self._next(tag or "__untagged__")
                except MissingScriptEntry:
                    self.transcript.append(CallRecord(tag, decode, p, None, "MissingScriptEntry"))
                    raise
                if isinstance(entry, Exception):
                    self.transcript.append(CallRecord(tag, decode, p, None, type(entry).__name__))
                    raise entry
                reply = entry if isinstance(entry, str) else json.dumps(entry)
                self.transcript.append(CallRecord(tag, decode, p, reply))
                return reply

        if decode == "json":
            return _decode_json_with_repair(ask, prompt)
        return ask(prompt)

    @property
    def call_count(self) -> int:
        return len(self.transcript)

    def calls_for(self, tag: str) -> list[CallRecord]:
        return [r for r in self.transcript if r.tag == tag]


def mock_llm(script: dict[str, Sequence], default: Optional[Sequence] = None) -> MockLlm:
    return MockLlm(script, default=default)


_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


def _fnv1a64(data: bytes, seed: int) -> int:
    h = _FNV64_OFFSET ^ (seed & _U64)
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & _U64
    return h


class HashEmbedder:
    """Deterministic bag-of-hashed-tokens embedder: each token lands in a
    seeded FNV-1a bucket, counts are L2-normalized (a zero vector stays
    zero). Platform-independent; lexical overlap drives cosine similarity."""

    def __init__(self, spec: EmbeddingSpec, seed: int = 0):
        if spec.dim < 8:
            raise ValueError("hash embedder needs dim >= 8")
        self.spec = spec
        self.seed = seed

    def embed(self, payload: str) -> np.ndarray:
        vec = np.zeros(self.spec.dim, dtype=np.float64)
        for token in tokenize(payload):
            bucket = _fnv1a64(token.encode("utf-8"), self.seed) % self.spec.dim
            vec[bucket] += 1.0
        if self.spec.normalized:
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                vec /= norm
        return vec.astype(np.float32)


def hash_embedder(spec: EmbeddingSpec, seed: int = 0) -> HashEmbedder:
    return HashEmbedder(spec, seed=seed)


@dataclass
class HttpConfig:
    base_url: str
    api_key: str
    model: str
    timeout: float = 30.0
    max_attempts: int = 3
    backoff_base: float = 0.5
    backoff_factor: float = 2.0

    @classmethod
    def llm_from_env(cls) -> "HttpConfig":
        return cls(
            base_url=os.environ["LLM_API_BASE"],
            api_key=os.environ.get("LLM_API_KEY", ""),
            model=os.environ.get("LLM_MODEL", "default"),
        )

    @classmethod
    def embedder_from_env(cls) -> "HttpConfig":
        return cls(
            base_url=os.environ["EMBED_API_BASE"],
            api_key=os.environ.get("EMBED_API_KEY", ""),
            model=os.environ.get("EMBED_MODEL", "default"),
        )


class _HttpBackend:
    def __init__(self, config: HttpConfig, session: Optional[requests.Session] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self.session = session or requests.Session()
        self._sleep = sleep

    def _post(self, path: str, payload: dict) -> dict:
        """POST with bounded retry and exponential backoff on transport
        errors and 5xx; auth failures and other 4xx do not retry."""
        cfg = self.config
        url = cfg.base_url.rstrip("/") + path
        headers = {"Authorization": f"Bearer {cfg.api_key}"} if cfg.api_key else {}
        delay = cfg.backoff_base
        last: Exception | None = None
        for attempt in range(1, cfg.max_attempts + 1):
            try:
                resp = self.session.post(url, json=payload, headers=headers, timeout=cfg.timeout)
            except requests.Timeout as exc:
                last = TimeoutError_(f"timeout after {cfg.timeout}s (attempt {attempt})")
                last.__cause__ = exc
            except requests.RequestException as exc:
                last = TimeoutError_(f"transport failure: {exc}")
                last.__cause__ = exc
            else:
                if resp.status_code in (401, 403):
                    raise AuthError(f"HTTP {resp.status_code} from {url}")
                if 200 <= resp.status_code < 300:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise DecodeError(f"response body is not JSON: {exc}") from exc
                last = HttpStatusError(resp.status_code, resp.text[:200])
                if not 500 <= resp.status_code < 600:
                    raise last
            if attempt < cfg.max_attempts:
                self._sleep(delay)
                delay *= cfg.backoff_factor
        assert last is not None
        raise last


class HttpLlm(_HttpBackend):
    """Chat-completion-style client; see docs/interfaces.md for the payload
    template."""

    def complete(self, prompt: str, decode: str = "free_text", tag: Optional[str] = None) -> str:
        def ask(p: str) -> str:
            body = self._post("/chat/completions", {
                "model": self.config.model,
                "messages": [{"role": "user", "content": p}],
            })
            try:
                content = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise DecodeError(f"malformed completion response: {exc}") from exc
            if not isinstance(content, str):
                raise DecodeError("completion content is not a string")
            return content

        if decode == "json":
            return _decode_json_with_repair(ask, prompt)
        return ask(prompt)


class HttpEmbedder(_HttpBackend):
    """Embedding-style client returning fixed-dimension vectors."""

    def __init__(self, config: HttpConfig, spec: EmbeddingSpec, **kwargs):
        super().__init__(config, **kwargs)
        self.spec = spec

    def embed(self, payload: str) -> np.ndarray:
        body = self._post("/embeddings", {"model": self.config.model, "input": [payload]})
        try:
            values = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise DecodeError(f"malformed embedding response: {exc}") from exc
        vec = np.asarray(values, dtype=np.float32)
        if vec.ndim != 1 or vec.shape[0] != self.spec.dim:
            raise DimensionMismatch(f"expected dim {self.spec.dim}, got shape {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise DecodeError("embedding contains non-finite values")
        if self.spec.normalized:
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                vec = vec / norm
        return vec


def http_llm(config: HttpConfig, **kwargs) -> HttpLlm:
    return HttpLlm(config, **kwargs)


def http_embedder(config: HttpConfig, spec: EmbeddingSpec, **kwargs) -> HttpEmbedder:
    return HttpEmbedder(config, spec, **kwargs)


# Keyword cues per pillar, following the taxonomy. Used by the stub
# classifier port so the fine-tuned-classifier path stays hermetic.
_PILLAR_KEYWORDS: dict[PillarId, tuple[str, ...]] = {
    PillarId.P1: ("pillar 1", "risk knowledge", "risk mapping", "vulnerability assessment",
                  "vulnerability mapping", "disaster loss", "data rescue", "hazard data"),
    PillarId.P2: ("pillar 2", "observation network", "monitoring station", "radar", "gauge",
                  "forecasting", "seasonal prediction", "hydromet", "climate services"),
    PillarId.P3: ("pillar 3", "dissemination", "alert", "cell broadcast", "siren", "sms",
                  "emergency broadcast", "warning communication", "alerting"),
    PillarId.P4: ("pillar 4", "preparedness", "contingency plan", "anticipatory action",
                  "drill", "evacuation", "shelter", "public awareness"),
    PillarId.XP: ("cross-pillar", "cross pillar", "governance", "institutional framework",
                  "coordination", "financial sustainability", "project management"),
}


class KeywordClassifier:
    """Deterministic multi-label classifier stub: a pillar applies when any
    of its keyword cues appears in the (lowercased) chunk body."""

    def __init__(self, keywords: Optional[dict[PillarId, tuple[str, ...]]] = None):
        self.keywords = keywords or _PILLAR_KEYWORDS

    def classify(self, augmented_body: str) -> set[PillarId]:
        text = augmented_body.lower()
        return {p for p, cues in self.keywords.items() if any(c in text for c in cues)}


def keyword_classifier() -> KeywordClassifier:
    return KeywordClassifier()
