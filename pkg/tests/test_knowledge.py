from __future__ import annotations

import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from edurefine.gateway import BackendUnreachableError, DimensionMismatchError, EmbeddingVector
from edurefine.knowledge import (
    EmptyStoreError,
    InvalidParamsError,
    KnowledgeStore,
    RawDocument,
    SourceKind,
    StoreError,
    ZeroVectorError,
    chunk_spans,
    chunk_text,
    cosine,
    count_words,
    load_manifest,
)

from helpers import corpus_docs, make_gateway, make_store


# ------------------------------------------------------------- oracle

def brute_force_ranking(chunks, query_values):
    """Exact cosine ranking in plain Python, independent of the store path."""
    q_norm = math.sqrt(sum(x * x for x in query_values))
    scored = []
    for chunk in chunks:
        values = chunk.vector.values
        dot = sum(a * b for a, b in zip(values, query_values))
        norm = math.sqrt(sum(v * v for v in values))
        scored.append((chunk.chunk_id, dot / (norm * q_norm)))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [chunk_id for chunk_id, _ in scored]


# ----------------------------------------------------------- chunking

def test_chunk_text_overlapping_spans():
    chunks = chunk_text("abcdef", size=4, overlap=2)
    assert [(c.span, c.text) for c in chunks] == [((0, 4), "abcd"), ((2, 6), "cdef")]


def test_chunk_text_short_body_single_chunk():
    chunks = chunk_text("abc", size=4, overlap=2)
    assert len(chunks) == 1
    assert chunks[0].text == "abc"


def test_chunk_spans_strides():
    # hand-enumerated stride positions for length 10, size 4, overlap 2
    assert chunk_spans(10, 4, 2) == [(0, 4), (2, 6), (4, 8), (6, 10)]


def test_chunk_text_rejects_bad_params():
    with pytest.raises(InvalidParamsError):
        chunk_text("abcdef", size=4, overlap=4)
    with pytest.raises(InvalidParamsError):
        chunk_text("", size=4, overlap=1)


@given(
    body=st.text(min_size=1, max_size=300),
    size=st.integers(min_value=1, max_value=50),
    overlap=st.integers(min_value=0, max_value=49),
)
def test_chunks_reassemble_to_body(body, size, overlap):
    if overlap >= size:
        overlap = size - 1
    chunks = chunk_text(body, size=size, overlap=overlap)
    rebuilt = chunks[0].text + "".join(c.text[overlap:] for c in chunks[1:])
    assert rebuilt == body
    for chunk in chunks:
        start, end = chunk.span
        assert chunk.text == body[start:end]


# ------------------------------------------------------------- cosine

def test_cosine_identity():
    gateway = make_gateway()
    (v,) = gateway.embed(["self"], "strong-mock")
    assert cosine(v, v) == pytest.approx(1.0, abs=1e-9)


def test_cosine_orthogonal():
    u = EmbeddingVector(values=(1.0, 0.0), dimension=2)
    v = EmbeddingVector(values=(0.0, 1.0), dimension=2)
    assert cosine(u, v) == 0.0


def test_cosine_hand_computed():
    u = EmbeddingVector(values=(1.0, 2.0, 3.0), dimension=3)
    v = EmbeddingVector(values=(4.0, 5.0, 6.0), dimension=3)
    assert cosine(u, v) == pytest.approx(0.974631846, abs=1e-6)


def test_cosine_errors():
    u = EmbeddingVector(values=(1.0, 0.0), dimension=2)
    w = EmbeddingVector(values=(1.0, 0.0, 0.0), dimension=3)
    z = EmbeddingVector(values=(0.0, 0.0), dimension=2)
    with pytest.raises(DimensionMismatchError):
        cosine(u, w)
    with pytest.raises(ZeroVectorError):
        cosine(u, z)


# ------------------------------------------------------------- ingest

def test_ingest_counts_and_stats():
    gateway = make_gateway()
    store = KnowledgeStore(gateway, "strong-mock")
    docs = corpus_docs(per_source=1)
    report = store.ingest(docs, size=100, overlap=10)
    assert report.chunks_added == len(store.chunks)
    assert set(report.per_source_counts) == set(SourceKind)
    stats = store.stats()
    for kind in SourceKind:
        assert stats[kind].doc_count == 1
        assert stats[kind].chunk_count >= 1
        assert stats[kind].word_count == sum(
            d.word_count for d in docs if d.source is kind
        )


def test_ingest_empty_list_is_identity():
    gateway = make_gateway()
    store = KnowledgeStore(gateway, "strong-mock")
    report = store.ingest([])
    assert report.chunks_added == 0
    assert len(store) == 0


def test_reingest_replaces_not_duplicates():
    gateway = make_gateway()
    store = KnowledgeStore(gateway, "strong-mock")
    doc = RawDocument.from_text(
        "doc-1", SourceKind.LITERATURE_WORKS, "t", "lorem ipsum " * 30
    )
    store.ingest([doc], size=60, overlap=10)
    before = len(store)
    store.ingest([doc], size=60, overlap=10)
    assert len(store) == before


def test_ingest_atomic_on_embedding_failure():
    gateway = make_gateway(fail_needles=["POISON"])
    store = KnowledgeStore(gateway, "strong-mock")
    good = RawDocument.from_text("ok-1", SourceKind.TEACHING_THEORY, "t", "alpha beta " * 20)
    store.ingest([good], size=60, overlap=10)
    stats_before = store.stats()
    bad = RawDocument.from_text(
        "bad-1", SourceKind.TEACHING_THEORY, "t", "gamma POISON delta " * 10
    )
    with pytest.raises(BackendUnreachableError):
        store.ingest([good, bad], size=60, overlap=10)
    assert store.stats() == stats_before


def test_safety_prompts_kept_whole_with_category():
    gateway = make_gateway()
    store = KnowledgeStore(gateway, "strong-mock")
    body = "malicious ask\nsafe reply guidance " * 40  # longer than chunk size
    doc = RawDocument.from_text(
        "safety-1",
        SourceKind.SAFETY_PROMPTS,
        "pair",
        body,
        meta={"category": "mental health"},
    )
    store.ingest([doc], size=64, overlap=8)
    chunks = [c for c in store.chunks if c.doc_id == "safety-1"]
    assert len(chunks) == 1
    assert chunks[0].text == body
    assert chunks[0].meta["category"] == "mental health"


def test_word_count_is_script_aware():
    assert count_words("hello world") == 2
    assert count_words("你好") == 2  # two CJK characters
    assert count_words("你好 world hello") == 4
    assert count_words("  spaced   out  ") == 2


def test_large_corpus_word_count_representable():
    body = "字" * 207800
    doc = RawDocument.from_text("lit-big", SourceKind.LITERATURE_WORKS, "novel", body)
    assert doc.word_count == 207800


# ------------------------------------------------------------- search

def test_identity_retrieval_rank_one():
    gateway = make_gateway()
    store = make_store(gateway)
    target = store.chunks[5]
    results = store.search(target.text, k=3)
    assert results[0].chunk.chunk_id == target.chunk_id
    assert results[0].similarity == pytest.approx(1.0, abs=1e-9)
    assert results[0].rank == 1


def test_k_larger_than_store_returns_all_sorted():
    gateway = make_gateway()
    store = make_store(gateway)
    results = store.search("anything", k=10_000)
    assert len(results) == len(store)
    sims = [r.similarity for r in results]
    assert sims == sorted(sims, reverse=True)
    assert [r.rank for r in results] == list(range(1, len(results) + 1))


def test_search_matches_brute_force_oracle():
    gateway = make_gateway()
    docs = []
    rng = random.Random(13)
    for i in range(10):
        body = " ".join(f"tok{rng.randrange(500)}" for _ in range(80))
        docs.append(
            RawDocument.from_text(f"d{i:02d}", SourceKind.LITERATURE_WORKS, f"t{i}", body)
        )
    store = make_store(gateway, docs=docs, size=90, overlap=10)
    assert len(store) >= 50
    for q in range(20):
        query = f"query {rng.randrange(10_000)}"
        (query_vec,) = gateway.embed([query], "strong-mock")
        expected = brute_force_ranking(store.chunks, query_vec.values)
        got = [r.chunk.chunk_id for r in store.search(query, k=len(store))]
        assert got == expected


def test_every_source_filterable_independently():
    gateway = make_gateway()
    store = make_store(gateway)
    for kind in SourceKind:
        results = store.search("x", k=100, source_filter={kind})
        assert results
        assert all(r.chunk.source is kind for r in results)


def test_unknown_safety_category_rejected():
    gateway = make_gateway()
    store = KnowledgeStore(gateway, "strong-mock")
    doc = RawDocument.from_text(
        "s1", SourceKind.SAFETY_PROMPTS, "t", "pair body", meta={"category": "nonsense"}
    )
    with pytest.raises(InvalidParamsError):
        store.ingest([doc])


def test_search_empty_store_errors():
    gateway = make_gateway()
    store = KnowledgeStore(gateway, "strong-mock")
    with pytest.raises(EmptyStoreError):
        store.search("x", k=1)
    populated = make_store(gateway)
    with pytest.raises(EmptyStoreError):
        populated.search("x", k=1, source_filter=set())


# -------------------------------------------------------- persistence

def test_snapshot_round_trip(tmp_path):
    gateway = make_gateway()
    store = make_store(gateway)
    path = tmp_path / "kb" / "store.snap"
    store.save(path)
    assert path.read_text(encoding="utf-8").startswith("EDUREFINE-KB 1\n")

    reloaded = KnowledgeStore(gateway, "strong-mock")
    reloaded.load(path)
    assert reloaded.stats() == store.stats()
    query = "round trip query"
    before = [(r.chunk.chunk_id, r.similarity) for r in store.search(query, k=7)]
    after = [(r.chunk.chunk_id, r.similarity) for r in reloaded.search(query, k=7)]
    assert before == after


def test_snapshot_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.snap"
    path.write_text("NOT-A-SNAPSHOT\n{}", encoding="utf-8")
    store = KnowledgeStore(make_gateway(), "strong-mock")
    with pytest.raises(StoreError):
        store.load(path)


def test_manifest_ingestion(tmp_path):
    (tmp_path / "a.txt").write_text("alpha beta gamma " * 10, encoding="utf-8")
    (tmp_path / "b.txt").write_text("delta epsilon " * 10, encoding="utf-8")
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text(
        '{"path": "a.txt", "source": "class-records", "title": "A"}\n'
        '{"path": "b.txt", "source": "literature-works", "title": "B"}\n',
        encoding="utf-8",
    )
    docs = load_manifest(manifest)
    assert [d.source for d in docs] == [SourceKind.CLASS_RECORDS, SourceKind.LITERATURE_WORKS]
    gateway = make_gateway()
    store = KnowledgeStore(gateway, "strong-mock")
    report = store.ingest(docs, size=64, overlap=8)
    assert report.per_source_counts[SourceKind.CLASS_RECORDS] >= 1


def test_manifest_errors_carry_line(tmp_path):
    manifest = tmp_path / "manifest.jsonl"
    manifest.write_text('{"path": "missing.txt", "source": "class-records", "title": "A"}\n')
    with pytest.raises(StoreError, match="line 1"):
        load_manifest(manifest)
