"""Multi-source document store with chunked embeddings and exact top-k search.

The store is deliberately a linear-scan index: desk-scale corpora do not
justify ANN structures, and the search contract is exact cosine ranking with
deterministic tie-breaking.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .gateway import DimensionMismatchError, EmbeddingVector, Gateway

SNAPSHOT_MAGIC = "EDUREFINE-KB 1"


class StoreError(Exception):
    pass


class InvalidParamsError(StoreError):
    pass


class EmptyStoreError(StoreError):
    pass


class ZeroVectorError(StoreError):
    pass


class SourceKind(str, Enum):
    CLASS_RECORDS = "class-records"
    TEACHING_THEORY = "teaching-theory"
    EDU_PSYCH_THEORY = "edu-psych-theory"
    SAFETY_PROMPTS = "safety-prompts"
    LITERATURE_WORKS = "literature-works"


SAFETY_CATEGORIES = (
    "crimes and illegal activities",
    "ethics and morality",
    "insult",
    "mental health",
    "physical harm",
    "privacy and property",
    "unfairness and discrimination",
)

# CJK unified ideographs count one unit per character; everything else counts
# whitespace-delimited tokens.
_CJK = re.compile(r"[㐀-䶿一-鿿豈-﫿]")


def count_words(text: str) -> int:
    cjk = len(_CJK.findall(text))
    rest = _CJK.sub(" ", text)
    return cjk + len(rest.split())


@dataclass(frozen=True)
class RawDocument:
    doc_id: str
    source: SourceKind
    title: str
    body: str
    word_count: int
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.body:
            raise ValueError("document body must be non-empty")
        expected = count_words(self.body)
        if self.word_count != expected:
            raise ValueError(f"word_count {self.word_count} != counted {expected}")

    @classmethod
    def from_text(
        cls,
        doc_id: str,
        source: SourceKind,
        title: str,
        body: str,
        meta: dict[str, str] | None = None,
    ) -> "RawDocument":
        return cls(
            doc_id=doc_id,
            source=source,
            title=title,
            body=body,
            word_count=count_words(body),
            meta=dict(meta or {}),
        )


@dataclass(frozen=True)
class KnowledgeChunk:
    chunk_id: str
    doc_id: str
    source: SourceKind | None
    text: str
    span: tuple[int, int]
    vector: EmbeddingVector | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        start, end = self.span
        if not start < end:
            raise ValueError("span start must be < end")


@dataclass(frozen=True)
class ScoredCandidate:
    chunk: KnowledgeChunk
    similarity: float
    rank: int


@dataclass(frozen=True)
class SourceStats:
    doc_count: int
    word_count: int
    chunk_count: int


@dataclass(frozen=True)
class IngestReport:
    chunks_added: int
    per_source_counts: dict[SourceKind, int]


def chunk_spans(length: int, size: int, overlap: int) -> list[tuple[int, int]]:
    """Stride positions covering [0, length); adjacent spans share `overlap`
    characters, except possibly the final shortened span."""
    if overlap >= size:
        raise InvalidParamsError(f"overlap {overlap} must be < size {size}")
    if size < 1 or overlap < 0:
        raise InvalidParamsError("size must be >= 1 and overlap >= 0")
    spans = []
    start = 0
    while True:
        end = min(start + size, length)
        spans.append((start, end))
        if end == length:
            return spans
        start += size - overlap


def chunk_text(
    body: str,
    size: int,
    overlap: int,
    doc_id: str = "doc",
    source: SourceKind | None = None,
    meta: dict[str, str] | None = None,
) -> list[KnowledgeChunk]:
    if not body:
        raise InvalidParamsError("body must be non-empty")
    chunks = []
    for index, (start, end) in enumerate(chunk_spans(len(body), size, overlap)):
        chunks.append(
            KnowledgeChunk(
                chunk_id=f"{doc_id}:{index:05d}",
                doc_id=doc_id,
                source=source,
                text=body[start:end],
                span=(start, end),
                meta=dict(meta or {}),
            )
        )
    return chunks


def cosine(u: EmbeddingVector, v: EmbeddingVector) -> float:
    if u.dimension != v.dimension:
        raise DimensionMismatchError(f"dimensions differ: {u.dimension} vs {v.dimension}")
    a = u.as_array()
    b = v.as_array()
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine undefined for zero vectors")
    value = float(np.dot(a, b) / (norm_a * norm_b))
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class _State:
    docs: dict[str, RawDocument]
    chunks: tuple[KnowledgeChunk, ...]
    matrix: np.ndarray | None  # row i = vector of chunks[i]
    norms: np.ndarray | None


_EMPTY_STATE = _State(docs={}, chunks=(), matrix=None, norms=None)


class KnowledgeStore:
    """Embedded chunk store; many concurrent readers, exclusive ingest.

    Readers always observe a complete snapshot: ingest builds the next state
    off to the side and swaps it in atomically.
    """

    def __init__(self, gateway: Gateway, embed_backend_id: str) -> None:
        self._gateway = gateway
        self._embed_backend_id = embed_backend_id
        self._state = _EMPTY_STATE
        self._write_lock = threading.Lock()

    # ---------------------------------------------------------------- ingest

    def _doc_chunks(self, doc: RawDocument, size: int, overlap: int) -> list[KnowledgeChunk]:
        if doc.source is SourceKind.SAFETY_PROMPTS:
            # one (malicious prompt, safe response) pair stays a single chunk,
            # tagged with its category
            category = doc.meta.get("category", SAFETY_CATEGORIES[0])
            if category not in SAFETY_CATEGORIES:
                raise InvalidParamsError(
                    f"unknown safety category {category!r} for {doc.doc_id}"
                )
            meta = {"category": category}
            return [
                KnowledgeChunk(
                    chunk_id=f"{doc.doc_id}:00000",
                    doc_id=doc.doc_id,
                    source=doc.source,
                    text=doc.body,
                    span=(0, len(doc.body)),
                    meta=meta,
                )
            ]
        return chunk_text(doc.body, size, overlap, doc_id=doc.doc_id, source=doc.source)

    def ingest(self, docs: list[RawDocument], size: int = 512, overlap: int = 64) -> IngestReport:
        per_source = {kind: 0 for kind in SourceKind}
        if not docs:
            return IngestReport(chunks_added=0, per_source_counts=per_source)
        with self._write_lock:
            pending: list[KnowledgeChunk] = []
            for doc in docs:
                pending.extend(self._doc_chunks(doc, size, overlap))
            # embed before touching store state so a backend failure leaves
            # the snapshot untouched
            vectors = self._gateway.embed([c.text for c in pending], self._embed_backend_id)
            pending = [replace(c, vector=v) for c, v in zip(pending, vectors)]

            state = self._state
            replaced_ids = {doc.doc_id for doc in docs}
            docs_next = {i: d for i, d in state.docs.items() if i not in replaced_ids}
            chunks_next = [c for c in state.chunks if c.doc_id not in replaced_ids]
            for doc in docs:
                docs_next[doc.doc_id] = doc
            chunks_next.extend(pending)
            chunks_next.sort(key=lambda c: c.chunk_id)
            matrix = np.vstack([c.vector.as_array() for c in chunks_next])
            norms = np.linalg.norm(matrix, axis=1)
            self._state = _State(
                docs=docs_next, chunks=tuple(chunks_next), matrix=matrix, norms=norms
            )
        for chunk in pending:
            per_source[chunk.source] += 1
        return IngestReport(chunks_added=len(pending), per_source_counts=per_source)

    # ---------------------------------------------------------------- search

    def search(
        self,
        query: str,
        k: int,
        source_filter: set[SourceKind] | None = None,
    ) -> list[ScoredCandidate]:
        if k < 1:
            raise InvalidParamsError("k must be >= 1")
        state = self._state
        if source_filter is None:
            indices = list(range(len(state.chunks)))
        else:
            indices = [i for i, c in enumerate(state.chunks) if c.source in source_filter]
        if not indices:
            raise EmptyStoreError("no chunks stored for the requested sources")
        (query_vec,) = self._gateway.embed([query], self._embed_backend_id)
        q = query_vec.as_array()
        q_norm = float(np.linalg.norm(q))
        if q_norm == 0.0:
            raise ZeroVectorError("query embedded to a zero vector")
        sub = state.matrix[indices]
        sims = sub @ q / (state.norms[indices] * q_norm)
        sims = np.clip(sims, -1.0, 1.0)
        order = sorted(range(len(indices)), key=lambda j: (-sims[j], state.chunks[indices[j]].chunk_id))
        top = order[: min(k, len(order))]
        return [
            ScoredCandidate(chunk=state.chunks[indices[j]], similarity=float(sims[j]), rank=rank)
            for rank, j in enumerate(top, start=1)
        ]

    # ----------------------------------------------------------------- stats

    def stats(self) -> dict[SourceKind, SourceStats]:
        state = self._state
        result = {}
        for kind in SourceKind:
            docs = [d for d in state.docs.values() if d.source is kind]
            chunk_count = sum(1 for c in state.chunks if c.source is kind)
            result[kind] = SourceStats(
                doc_count=len(docs),
                word_count=sum(d.word_count for d in docs),
                chunk_count=chunk_count,
            )
        return result

    def __len__(self) -> int:
        return len(self._state.chunks)

    @property
    def chunks(self) -> tuple[KnowledgeChunk, ...]:
        return self._state.chunks

    # ----------------------------------------------------------- persistence

    def save(self, path: str | Path) -> None:
        state = self._state
        payload = {
            "docs": [
                {
                    "doc_id": d.doc_id,
                    "source": d.source.value,
                    "title": d.title,
                    "body": d.body,
                    "word_count": d.word_count,
                    "meta": d.meta,
                }
                for d in state.docs.values()
            ],
            "chunks": [
                {
                    "chunk_id": c.chunk_id,
                    "doc_id": c.doc_id,
                    "source": c.source.value,
                    "text": c.text,
                    "span": list(c.span),
                    "vector": list(c.vector.values),
                    "dimension": c.vector.dimension,
                    "meta": c.meta,
                }
                for c in state.chunks
            ],
        }
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            handle.write(SNAPSHOT_MAGIC + "\n")
            json.dump(payload, handle)

    def load(self, path: str | Path) -> None:
        with Path(path).open("r", encoding="utf-8") as handle:
            header = handle.readline().strip()
            if header != SNAPSHOT_MAGIC:
                raise StoreError(f"unrecognized snapshot header {header!r}")
            payload = json.load(handle)
        docs = {
            row["doc_id"]: RawDocument(
                doc_id=row["doc_id"],
                source=SourceKind(row["source"]),
                title=row["title"],
                body=row["body"],
                word_count=row["word_count"],
                meta=row.get("meta", {}),
            )
            for row in payload["docs"]
        }
        chunks = []
        for row in payload["chunks"]:
            chunks.append(
                KnowledgeChunk(
                    chunk_id=row["chunk_id"],
                    doc_id=row["doc_id"],
                    source=SourceKind(row["source"]),
                    text=row["text"],
                    span=tuple(row["span"]),
                    vector=EmbeddingVector(
                        values=tuple(row["vector"]), dimension=row["dimension"]
                    ),
                    meta=row.get("meta", {}),
                )
            )
        chunks.sort(key=lambda c: c.chunk_id)
        with self._write_lock:
            if chunks:
                matrix = np.vstack([c.vector.as_array() for c in chunks])
                norms = np.linalg.norm(matrix, axis=1)
            else:
                matrix = norms = None
            self._state = _State(docs=docs, chunks=tuple(chunks), matrix=matrix, norms=norms)


def load_manifest(manifest_path: str | Path) -> list[RawDocument]:
    """Read a corpus manifest: one JSON record per line with `path`, `source`,
    `title`, and optional `meta`; paths are relative to the manifest file."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    docs = []
    with manifest_path.open("r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                body = (base / row["path"]).read_text(encoding="utf-8")
                docs.append(
                    RawDocument.from_text(
                        doc_id=row.get("doc_id", row["path"]),
                        source=SourceKind(row["source"]),
                        title=row["title"],
                        body=body,
                        meta=row.get("meta"),
                    )
                )
            except (KeyError, ValueError, OSError) as exc:
                raise StoreError(f"manifest line {line_no}: {exc}") from exc
    return docs
