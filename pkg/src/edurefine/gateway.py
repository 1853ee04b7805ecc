"""Uniform chat-completion and embedding interface over pluggable backends.

Two backend kinds are supported: an OpenAI-compatible remote endpoint and a
scripted mock whose outputs are pure functions of the request, so every
downstream component can be exercised offline and reproducibly.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass, field

import numpy as np
import requests

USER = "user"
ASSISTANT = "assistant"

_ROLE_MARKER = re.compile(r"\[ROLE:([^\]]+)\]")


class GatewayError(Exception):
    pass


class UnknownBackendError(GatewayError):
    pass


class BackendUnreachableError(GatewayError):
    pass


class EmptyResponseError(GatewayError):
    pass


class DimensionMismatchError(GatewayError):
    pass


@dataclass(frozen=True)
class Sampling:
    temperature: float = 0.7
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    turns: tuple[tuple[str, str], ...]
    sampling: Sampling
    backend_id: str

    def __post_init__(self) -> None:
        if not self.turns:
            raise ValueError("turns must be non-empty")
        for speaker, _ in self.turns:
            if speaker not in (USER, ASSISTANT):
                raise ValueError(f"unknown speaker {speaker!r}")
        if self.turns[-1][0] != USER:
            raise ValueError("last turn must be spoken by the user")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    latency_ms: int


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dimension: int

    def __post_init__(self) -> None:
        if len(self.values) != self.dimension:
            raise ValueError("values length must equal dimension")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_ms: int = 200

    def __post_init__(self) -> None:
        if self.max_attempts < 1 or self.backoff_ms < 1:
            raise ValueError("retry parameters must be positive")


REMOTE_OPENAI = "remote-openai-compatible"
SCRIPTED_MOCK = "scripted-mock"


@dataclass(frozen=True)
class BackendDescriptor:
    id: str
    kind: str
    endpoint: str | None = None
    auth_token_env: str | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    # model name sent on the OpenAI-compatible wire; defaults to the id
    model: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in (REMOTE_OPENAI, SCRIPTED_MOCK):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == REMOTE_OPENAI and not self.endpoint:
            raise ValueError("remote backend requires an endpoint")
        if self.kind == SCRIPTED_MOCK and self.endpoint is not None:
            raise ValueError("mock backend must not set an endpoint")

    @property
    def wire_model(self) -> str:
        return self.model or self.id


@dataclass(frozen=True)
class MockRule:
    """Scripted response: fires when every needle occurs in the request text.

    The template may use ``{marker}`` and ``{digest}`` placeholders.
    """

    needles: tuple[str, ...]
    template: str


class MockBackend:
    """Deterministic offline backend.

    Completions are a pure function of (role marker in the system prompt,
    digest of the whole request); embeddings are unit-norm vectors seeded by
    the text alone. Equal inputs give byte-equal outputs across processes.
    """

    def __init__(
        self,
        descriptor: BackendDescriptor,
        seed: int = 0,
        dimension: int = 32,
        rules: list[MockRule] | None = None,
        fail_needles: list[str] | None = None,
    ) -> None:
        if dimension < 2:
            raise ValueError("embedding dimension must be >= 2")
        self.descriptor = descriptor
        self.seed = seed
        self.dimension = dimension
        self.rules = list(rules or [])
        self.fail_needles = list(fail_needles or [])

    def _flat_text(self, request: ChatRequest) -> str:
        turns = "\x1e".join(f"{speaker}:{text}" for speaker, text in request.turns)
        return f"{request.system_prompt}\x1e{turns}"

    def complete(self, request: ChatRequest) -> str:
        flat = self._flat_text(request)
        for needle in self.fail_needles:
            if needle in flat:
                raise BackendUnreachableError(f"scripted failure on {needle!r}")
        match = _ROLE_MARKER.search(request.system_prompt)
        marker = match.group(1) if match else "gen"
        digest = hashlib.sha256(
            f"{self.descriptor.id}|{self.seed}|{flat}".encode("utf-8")
        ).hexdigest()[:16]
        for rule in self.rules:
            if all(needle in flat for needle in rule.needles):
                return rule.template.format(marker=marker, digest=digest)
        return f"[{marker}] {digest}"

    def embed_one(self, text: str) -> EmbeddingVector:
        for needle in self.fail_needles:
            if needle in text:
                raise BackendUnreachableError(f"scripted failure on {needle!r}")
        raw = hashlib.shake_256(
            f"{self.descriptor.id}|{self.seed}|emb|{text}".encode("utf-8")
        ).digest(self.dimension * 8)
        ints = np.frombuffer(raw, dtype=np.uint64)
        values = ints.astype(np.float64) / np.float64(2**64) * 2.0 - 1.0
        values = values / np.linalg.norm(values)
        return EmbeddingVector(values=tuple(float(v) for v in values), dimension=self.dimension)


class Gateway:
    """Registry and dispatcher for chat/embedding backends.

    Safe for concurrent callers; in-flight remote requests are bounded by a
    shared semaphore. Per-backend attempt counts are observable for tests.
    """

    def __init__(self, max_inflight_remote: int = 8) -> None:
        self._backends: dict[str, BackendDescriptor] = {}
        self._mocks: dict[str, MockBackend] = {}
        self._dims: dict[str, int] = {}
        self._attempts: dict[str, int] = {}
        self._lock = threading.Lock()
        self._remote_slots = threading.BoundedSemaphore(max_inflight_remote)

    def register(self, descriptor: BackendDescriptor, mock: MockBackend | None = None) -> None:
        if descriptor.kind == SCRIPTED_MOCK:
            mock = mock or MockBackend(descriptor)
        elif mock is not None:
            raise ValueError("mock implementation only valid for scripted-mock backends")
        with self._lock:
            self._backends[descriptor.id] = descriptor
            if mock is not None:
                self._mocks[descriptor.id] = mock

    def descriptor(self, backend_id: str) -> BackendDescriptor:
        try:
            return self._backends[backend_id]
        except KeyError:
            raise UnknownBackendError(f"no backend registered under {backend_id!r}") from None

    def attempt_count(self, backend_id: str) -> int:
        with self._lock:
            return self._attempts.get(backend_id, 0)

    def _bump(self, backend_id: str) -> None:
        with self._lock:
            self._attempts[backend_id] = self._attempts.get(backend_id, 0) + 1

    # ------------------------------------------------------------------ chat

    def complete(self, request: ChatRequest) -> ChatResponse:
        descriptor = self.descriptor(request.backend_id)
        started = time.monotonic()
        if descriptor.kind == SCRIPTED_MOCK:
            self._bump(descriptor.id)
            text = self._mocks[descriptor.id].complete(request)
        else:
            text = self._remote_chat(descriptor, request)
        if not text:
            raise EmptyResponseError(f"backend {descriptor.id!r} returned empty text")
        latency_ms = int((time.monotonic() - started) * 1000)
        return ChatResponse(text=text, backend_id=descriptor.id, latency_ms=latency_ms)

    def _remote_chat(self, descriptor: BackendDescriptor, request: ChatRequest) -> str:
        messages = [{"role": "system", "content": request.system_prompt}]
        messages += [{"role": speaker, "content": text} for speaker, text in request.turns]
        body = {
            "model": descriptor.wire_model,
            "messages": messages,
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_tokens,
        }
        payload = self._remote_post(descriptor, "/chat/completions", body)
        try:
            return payload["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendUnreachableError(
                f"malformed chat payload from {descriptor.id!r}: {exc}"
            ) from exc

    # ------------------------------------------------------------ embeddings

    def embed(self, texts: list[str], backend_id: str) -> list[EmbeddingVector]:
        if not texts:
            raise ValueError("texts must be non-empty")
        if any(not t for t in texts):
            raise ValueError("every text must be non-empty")
        descriptor = self.descriptor(backend_id)
        if descriptor.kind == SCRIPTED_MOCK:
            self._bump(descriptor.id)
            vectors = [self._mocks[descriptor.id].embed_one(t) for t in texts]
        else:
            vectors = self._remote_embed(descriptor, texts)
        dims = {v.dimension for v in vectors}
        if len(dims) != 1:
            raise DimensionMismatchError(f"backend {backend_id!r} returned mixed dimensions {dims}")
        dim = dims.pop()
        with self._lock:
            known = self._dims.setdefault(backend_id, dim)
        if known != dim:
            raise DimensionMismatchError(
                f"backend {backend_id!r} changed dimension {known} -> {dim}"
            )
        return vectors

    def _remote_embed(self, descriptor: BackendDescriptor, texts: list[str]) -> list[EmbeddingVector]:
        body = {"model": descriptor.wire_model, "input": texts}
        payload = self._remote_post(descriptor, "/embeddings", body)
        try:
            rows = [row["embedding"] for row in payload["data"]]
        except (KeyError, TypeError) as exc:
            raise BackendUnreachableError(
                f"malformed embeddings payload from {descriptor.id!r}: {exc}"
            ) from exc
        if len(rows) != len(texts):
            raise BackendUnreachableError(
                f"backend {descriptor.id!r} returned {len(rows)} vectors for {len(texts)} texts"
            )
        return [EmbeddingVector(values=tuple(float(x) for x in row), dimension=len(row)) for row in rows]

    # --------------------------------------------------------------- wire IO

    def _headers(self, descriptor: BackendDescriptor) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if descriptor.auth_token_env:
            token = os.environ.get(descriptor.auth_token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _remote_post(self, descriptor: BackendDescriptor, path: str, body: dict) -> dict:
        url = descriptor.endpoint.rstrip("/") + path
        policy = descriptor.retry
        last_error: Exception | None = None
        for attempt in range(1, policy.max_attempts + 1):
            self._bump(descriptor.id)
            try:
                with self._remote_slots:
                    response = requests.post(
                        url, json=body, headers=self._headers(descriptor), timeout=60.0
                    )
            except requests.RequestException as exc:
                last_error = exc
            else:
                if response.status_code // 100 == 2:
                    return response.json()
                if response.status_code // 100 == 4:
                    raise BackendUnreachableError(
                        f"backend {descriptor.id!r} rejected request: HTTP {response.status_code}"
                    )
                last_error = BackendUnreachableError(
                    f"HTTP {response.status_code} from {descriptor.id!r}"
                )
            if attempt < policy.max_attempts:
                time.sleep(policy.backoff_ms / 1000.0)
        raise BackendUnreachableError(
            f"backend {descriptor.id!r} unreachable after {policy.max_attempts} attempts: {last_error}"
        )


def make_request(
    backend_id: str,
    system_prompt: str,
    user_text: str,
    history: list[tuple[str, str]] | None = None,
    temperature: float = 0.7,
    max_tokens: int = 1024,
) -> ChatRequest:
    """Build a single-question request with optional prior turns."""
    turns = tuple(history or ()) + ((USER, user_text),)
    return ChatRequest(
        system_prompt=system_prompt,
        turns=turns,
        sampling=Sampling(temperature=temperature, max_tokens=max_tokens),
        backend_id=backend_id,
    )
