"""Shared builders for the test suite: mock gateways, corpora, vote scripting."""

from __future__ import annotations

from edurefine.experts import PersonaLibrary, Role
from edurefine.gateway import (
    BackendDescriptor,
    Gateway,
    MockBackend,
    MockRule,
    SCRIPTED_MOCK,
)
from edurefine.knowledge import KnowledgeStore, RawDocument, SourceKind

ALL_EXPERT_TAGS = ("T1", "T2", "T3", "P1", "P2", "P3", "E1", "E2", "E3")


def vote_rules(tags=ALL_EXPERT_TAGS) -> list[MockRule]:
    """Expert <tag> accepts any candidate whose text carries `vote-<tag>`."""
    return [
        MockRule(
            needles=(f"[ROLE:{tag}]", f"vote-{tag}"),
            template="VERDICT: accept\nREASON: scripted reference value",
        )
        for tag in tags
    ]


def make_gateway(
    backend_id: str = "strong-mock",
    seed: int = 0,
    rules: list[MockRule] | None = None,
    fail_needles: list[str] | None = None,
    extra_backends: dict[str, int] | None = None,
) -> Gateway:
    gateway = Gateway()
    descriptor = BackendDescriptor(id=backend_id, kind=SCRIPTED_MOCK)
    gateway.register(
        descriptor,
        MockBackend(descriptor, seed=seed, rules=rules, fail_needles=fail_needles),
    )
    for extra_id, extra_seed in (extra_backends or {}).items():
        extra = BackendDescriptor(id=extra_id, kind=SCRIPTED_MOCK)
        gateway.register(extra, MockBackend(extra, seed=extra_seed))
    return gateway


def corpus_docs(per_source: int = 2, body_words: int = 60) -> list[RawDocument]:
    """A small synthetic corpus touching every source kind."""
    docs = []
    for kind in SourceKind:
        for i in range(per_source):
            body = " ".join(
                f"{kind.value}-w{i}-{j} classroom reading discussion" for j in range(body_words // 4)
            )
            meta = {"category": "ethics and morality"} if kind is SourceKind.SAFETY_PROMPTS else None
            docs.append(
                RawDocument.from_text(
                    doc_id=f"{kind.value}-{i}",
                    source=kind,
                    title=f"{kind.value} #{i}",
                    body=body,
                    meta=meta,
                )
            )
    return docs


def make_store(
    gateway: Gateway,
    backend_id: str = "strong-mock",
    docs: list[RawDocument] | None = None,
    size: int = 120,
    overlap: int = 20,
) -> KnowledgeStore:
    store = KnowledgeStore(gateway, backend_id)
    store.ingest(docs if docs is not None else corpus_docs(), size=size, overlap=overlap)
    return store


def personas() -> PersonaLibrary:
    return PersonaLibrary()


def three_experts(role: Role = Role.TEACHER):
    return personas().experts_for(role, 3)
