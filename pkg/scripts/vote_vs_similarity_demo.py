"""Show the reference-value filter overriding raw similarity ranking.

Eighteen retrieved candidates are scored two ways: cosine similarity (the
retrieval order) and panel accept votes. The two most similar candidates carry
no votes and are dropped; a low-similarity candidate with a unanimous panel
leads the accepted list.

Usage: python scripts/vote_vs_similarity_demo.py
"""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from edurefine.gateway import EmbeddingVector
from edurefine.knowledge import KnowledgeChunk, ScoredCandidate, SourceKind
from edurefine.reflection import filter_references

from helpers import make_gateway, three_experts, vote_rules

SIMS = {
    "c00": 0.90, "c01": 0.88, "c02": 0.86, "c03": 0.84, "c04": 0.95,
    "c05": 0.93, "c06": 0.82, "c07": 0.80, "c08": 0.78, "c09": 0.76,
    "c10": 0.74, "c11": 0.72, "c12": 0.70, "c13": 0.68, "c14": 0.66,
    "c15": 0.40, "c16": 0.35, "c17": 0.30,
}
VOTES = {
    "c15": ("T1", "T2", "T3"),
    "c07": ("T1", "T2"),
    "c11": ("T2", "T3"),
    "c01": ("T1",),
}


def main() -> None:
    candidates = []
    for rank, cid in enumerate(sorted(SIMS, key=lambda c: -SIMS[c]), start=1):
        text = "passage " + " ".join(f"vote-{t}" for t in VOTES.get(cid, ()))
        chunk = KnowledgeChunk(
            chunk_id=cid,
            doc_id="demo",
            source=SourceKind.LITERATURE_WORKS,
            text=text,
            span=(0, len(text)),
            vector=EmbeddingVector(values=(1.0, 0.0), dimension=2),
        )
        candidates.append(ScoredCandidate(chunk=chunk, similarity=SIMS[cid], rank=rank))

    gateway = make_gateway(rules=vote_rules())
    accepted = filter_references(
        gateway, "strong-mock", candidates, three_experts(), "topic", "answer", quota=5
    )
    accepted_ids = {r.chunk.chunk_id for r in accepted}

    print(f"{'id':>4} {'sim':>6} {'votes':>5}  outcome")
    for candidate in candidates:
        cid = candidate.chunk.chunk_id
        votes = len(VOTES.get(cid, ()))
        outcome = "ACCEPTED" if cid in accepted_ids else ""
        print(f"{cid:>4} {candidate.similarity:6.2f} {votes:>5}  {outcome}")
    print("\naccepted order:", [r.chunk.chunk_id for r in accepted])


if __name__ == "__main__":
    main()
