"""Reference-value filtering by expert vote.

Similarity ranking alone surfaces look-alike documents; what the refinement
panels need is material worth imitating. Every expert on the panel judges
every retrieved candidate for that reference value, and only candidates
winning a strict majority of accept votes survive.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from pathlib import Path

from .experts import ExpertProfile
from .gateway import Gateway, make_request
from .knowledge import KnowledgeChunk, ScoredCandidate

ACCEPT = "accept"
REJECT = "reject"

_ACCEPT_TOKEN = re.compile(r"\baccept\b", re.IGNORECASE)
_REASON_SPLIT = re.compile(r"REASON:\s*", re.IGNORECASE)

_ASSESS_PROMPT = """\
A student is discussing the topic below, and a tutoring reply to their answer
is being refined. Judge whether the retrieved document is worth imitating when
improving the reply. Weigh its {dimensions} rather than mere topical overlap.

Topic: {topic}
Student answer: {answer}

Document {chunk_id}:
{text}

Reply on the first line with "VERDICT: accept" or "VERDICT: reject",
then "REASON: <one sentence>".
"""

_log_lock = threading.Lock()


class ReflectionError(Exception):
    pass


class MixedChunkIdsError(ReflectionError):
    pass


@dataclass(frozen=True)
class ValueAssessment:
    expert: ExpertProfile
    chunk_id: str
    verdict: str
    rationale: str

    def __post_init__(self) -> None:
        if self.verdict not in (ACCEPT, REJECT):
            raise ValueError(f"verdict must be accept/reject, got {self.verdict!r}")
        if not self.rationale:
            raise ValueError("rationale must be non-empty")


@dataclass(frozen=True)
class VoteTally:
    chunk_id: str
    accepts: int
    rejects: int

    @property
    def accepted(self) -> bool:
        return self.accepts > self.rejects


@dataclass(frozen=True)
class AcceptedReference:
    chunk: KnowledgeChunk
    tally: VoteTally
    similarity: float

    def __post_init__(self) -> None:
        if not self.tally.accepted:
            raise ValueError("reference must carry a winning tally")


def assess(
    gateway: Gateway,
    backend_id: str,
    candidate: ScoredCandidate,
    topic: str,
    answer: str,
    expert: ExpertProfile,
) -> ValueAssessment:
    """One expert's accept/reject verdict on one retrieved candidate."""
    if candidate.chunk.vector is None:
        raise ValueError("candidate chunk has no embedding vector")
    prompt = _ASSESS_PROMPT.format(
        dimensions=", ".join(expert.value_dimensions),
        topic=topic,
        answer=answer,
        chunk_id=candidate.chunk.chunk_id,
        text=candidate.chunk.text,
    )
    response = gateway.complete(
        make_request(backend_id, expert.persona, prompt, temperature=0.0)
    )
    verdict = ACCEPT if _ACCEPT_TOKEN.search(response.text) else REJECT
    parts = _REASON_SPLIT.split(response.text, maxsplit=1)
    rationale = parts[1].strip() if len(parts) == 2 and parts[1].strip() else response.text
    return ValueAssessment(
        expert=expert, chunk_id=candidate.chunk.chunk_id, verdict=verdict, rationale=rationale
    )


def tally_votes(assessments: list[ValueAssessment]) -> VoteTally:
    """Fold a full panel's verdicts for one chunk; strict majority accepts."""
    if not assessments:
        raise ValueError("assessments must be non-empty")
    chunk_ids = {a.chunk_id for a in assessments}
    if len(chunk_ids) != 1:
        raise MixedChunkIdsError(f"assessments span multiple chunks: {sorted(chunk_ids)}")
    accepts = sum(1 for a in assessments if a.verdict == ACCEPT)
    return VoteTally(chunk_id=chunk_ids.pop(), accepts=accepts, rejects=len(assessments) - accepts)


def _append_log(log_path: str | Path, assessments: list[ValueAssessment]) -> None:
    path = Path(log_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with _log_lock, path.open("a", encoding="utf-8") as handle:
        for a in assessments:
            handle.write(
                json.dumps(
                    {
                        "chunk_id": a.chunk_id,
                        "expert": a.expert.tag,
                        "verdict": a.verdict,
                        "rationale": a.rationale,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def filter_references(
    gateway: Gateway,
    backend_id: str,
    candidates: list[ScoredCandidate],
    experts: list[ExpertProfile],
    topic: str,
    answer: str,
    quota: int,
    log_path: str | Path | None = None,
) -> list[AcceptedReference]:
    """Full-panel vote over every candidate.

    Accepted chunks are ordered by (accept votes desc, similarity desc,
    chunk_id asc) and truncated to `quota`. The ordering is total, so the
    result does not depend on candidate input order.
    """
    if not experts:
        raise ValueError("experts must be non-empty")
    if quota < 1:
        raise ValueError("quota must be >= 1")
    accepted = []
    for candidate in candidates:
        assessments = [
            assess(gateway, backend_id, candidate, topic, answer, expert) for expert in experts
        ]
        if log_path is not None:
            _append_log(log_path, assessments)
        tally = tally_votes(assessments)
        if tally.accepted:
            accepted.append(
                AcceptedReference(
                    chunk=candidate.chunk, tally=tally, similarity=candidate.similarity
                )
            )
    accepted.sort(key=lambda r: (-r.tally.accepts, -r.similarity, r.chunk.chunk_id))
    return accepted[:quota]
