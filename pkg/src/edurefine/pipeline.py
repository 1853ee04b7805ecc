"""Sequential panel refinement of a raw tutoring reply.

Each configured group (teachers, psychologists, ethics reviewers) takes one
pass: retrieve candidate references scoped to the group's sources, vote on
their reference value, split the accepted references round-robin among the
group's experts, let each expert write an explicit analysis and a revision,
then merge the revisions with a single synthesis call. The synthesis becomes
the next group's input draft.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .experts import ExpertProfile, PersonaLibrary, Role
from .gateway import Gateway, GatewayError, make_request
from .knowledge import EmptyStoreError, KnowledgeStore
from .reflection import AcceptedReference, filter_references

DEFAULT_STAGES = (Role.TEACHER, Role.PSYCHOLOGIST, Role.ETHICS)

_ANALYSIS_PROMPT = """\
Study the assigned reference material and the student context below, then
write an explicit analysis: what is worth borrowing (tone, phrasing, structure,
pedagogy) for improving the tutoring reply, and what this particular student
needs.

Topic: {topic}
Student answer: {answer}
Student profile: {profile}
Prior exchanges: {history}

Assigned references:
{refs}

Current draft reply:
{draft}
"""

_REVISION_PROMPT = """\
Using your analysis below, rewrite the draft tutoring reply. Keep it addressed
to the student and self-contained.

Your analysis:
{analysis}

Topic: {topic}
Current draft reply:
{draft}
"""

_SYNTHESIS_PROMPT = """\
Merge the experts' revised replies into one reply for the student. Keep the
strongest elements of each revision; resolve disagreements in favor of the
student's needs.

Topic: {topic}
Student profile: {profile}

{revisions}
"""


class PipelineError(Exception):
    pass


class StageFailureError(PipelineError):
    """A stage aborted; carries whatever the stage completed, for audit."""

    def __init__(
        self,
        role: Role,
        cause: Exception,
        expert_index: int | None = None,
        accepted_refs: list[AcceptedReference] | None = None,
        completed: list["ExpertContribution"] | None = None,
    ) -> None:
        super().__init__(f"stage {role.value} failed: {cause}")
        self.role = role
        self.cause = cause
        self.expert_index = expert_index
        self.accepted_refs = accepted_refs or []
        self.completed = completed or []


class PipelineFailureError(PipelineError):
    """The run aborted mid-pipeline; carries completed stages and the failure."""

    def __init__(self, failure: StageFailureError, partial: "RefinementTrace | None") -> None:
        super().__init__(str(failure))
        self.failure = failure
        self.partial = partial


@dataclass(frozen=True)
class StudentContext:
    profile: str
    history: tuple[tuple[str, str, str], ...] = ()  # (topic, answer, response)

    def __post_init__(self) -> None:
        if not self.profile:
            raise ValueError("student profile must be non-empty")

    def history_digest(self, limit: int = 3) -> str:
        if not self.history:
            return "(first exchange)"
        lines = [
            f"- topic: {t} | student: {a} | reply: {r}" for t, a, r in self.history[-limit:]
        ]
        return "\n".join(lines)


@dataclass(frozen=True)
class PipelineConfig:
    stages: tuple[Role, ...] = DEFAULT_STAGES
    experts_per_group: dict[Role, int] = field(
        default_factory=lambda: {role: 3 for role in Role}
    )
    retrieval_k: int = 18
    quota: int = 3

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("stages must be non-empty")
        if len(set(self.stages)) != len(self.stages):
            raise ValueError("stages must not repeat a role")
        for role in self.stages:
            if self.experts_per_group.get(role, 0) < 1:
                raise ValueError(f"experts_per_group[{role.value}] must be >= 1")
        if self.retrieval_k < 1 or self.quota < 1:
            raise ValueError("retrieval_k and quota must be >= 1")


@dataclass(frozen=True)
class ExpertContribution:
    index: int
    analysis: str
    revision: str
    assigned_chunk_ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.analysis or not self.revision:
            raise ValueError("analysis and revision must be non-empty")


@dataclass(frozen=True)
class StageTrace:
    role: Role
    accepted_refs: tuple[AcceptedReference, ...]
    per_expert: tuple[ExpertContribution, ...]
    synthesis: str
    input_draft: str
    output_draft: str

    def __post_init__(self) -> None:
        if self.output_draft != self.synthesis:
            raise ValueError("output_draft must equal the synthesis")
        if not self.per_expert:
            raise ValueError("a stage needs at least one expert contribution")


@dataclass(frozen=True)
class RefinementTrace:
    trace_id: str
    topic: str
    student_context: StudentContext
    raw_draft: str
    stages: tuple[StageTrace, ...]
    final: str

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValueError("trace must contain at least one stage")
        if self.final != self.stages[-1].output_draft:
            raise ValueError("final must equal the last stage's output draft")
        previous = self.raw_draft
        for stage in self.stages:
            if stage.input_draft != previous:
                raise ValueError("stage chaining broken: input != previous output")
            previous = stage.output_draft


def assign_references(
    experts: list[ExpertProfile], refs: list[AcceptedReference]
) -> dict[int, list[AcceptedReference]]:
    """Round-robin split, in reference order; experts may come up empty."""
    if not experts:
        raise ValueError("experts must be non-empty")
    assignment: dict[int, list[AcceptedReference]] = {e.index: [] for e in experts}
    indices = [e.index for e in experts]
    for position, ref in enumerate(refs):
        assignment[indices[position % len(indices)]].append(ref)
    return assignment


def _format_refs(refs: list[AcceptedReference]) -> str:
    if not refs:
        return "(none assigned; work from the student context alone)"
    blocks = [f"[{r.chunk.chunk_id}] {r.chunk.text}" for r in refs]
    return "\n\n".join(blocks)


class RefinementPipeline:
    """Drives the configured stages over a shared gateway and store."""

    def __init__(
        self,
        gateway: Gateway,
        store: KnowledgeStore,
        personas: PersonaLibrary,
        config: PipelineConfig,
        backend_id: str,
        assessment_log: str | Path | None = None,
    ) -> None:
        self.gateway = gateway
        self.store = store
        self.personas = personas
        self.config = config
        self.backend_id = backend_id
        self.assessment_log = assessment_log

    # ------------------------------------------------------------- per call

    def expert_revise(
        self,
        expert: ExpertProfile,
        draft: str,
        topic: str,
        context: StudentContext,
        refs: list[AcceptedReference],
        answer: str = "",
    ) -> tuple[str, str]:
        """Analysis call, then a revision call conditioned on that analysis."""
        if not draft:
            raise ValueError("draft must be non-empty")
        analysis_prompt = _ANALYSIS_PROMPT.format(
            topic=topic,
            answer=answer or "(not recorded)",
            profile=context.profile,
            history=context.history_digest(),
            refs=_format_refs(refs),
            draft=draft,
        )
        analysis = self.gateway.complete(
            make_request(self.backend_id, expert.persona, analysis_prompt)
        ).text
        revision_prompt = _REVISION_PROMPT.format(analysis=analysis, topic=topic, draft=draft)
        revision = self.gateway.complete(
            make_request(self.backend_id, expert.persona, revision_prompt)
        ).text
        return analysis, revision

    def synthesize(
        self,
        revisions: list[tuple[int, str]],
        role: Role,
        topic: str,
        context: StudentContext,
    ) -> str:
        """Single merge call over all labeled revisions, as the group voice."""
        if not revisions:
            raise ValueError("revisions must be non-empty")
        labeled = "\n\n".join(
            f"Revision by expert {role.value}{index}:\n{text}" for index, text in revisions
        )
        prompt = _SYNTHESIS_PROMPT.format(topic=topic, profile=context.profile, revisions=labeled)
        return self.gateway.complete(
            make_request(self.backend_id, self.personas.group_persona(role), prompt)
        ).text

    # ---------------------------------------------------------------- stages

    def run_stage(
        self,
        draft: str,
        topic: str,
        answer: str,
        context: StudentContext,
        role: Role,
    ) -> StageTrace:
        if role not in self.config.stages:
            raise ValueError(f"role {role.value} is not in the configured stages")
        experts = self.personas.experts_for(role, self.config.experts_per_group[role])
        scope = set(experts[0].source_scope)
        try:
            candidates = self.store.search(
                f"{topic}\n{answer}" if answer else topic,
                k=self.config.retrieval_k,
                source_filter=scope,
            )
        except EmptyStoreError:
            candidates = []
        try:
            refs = (
                filter_references(
                    self.gateway,
                    self.backend_id,
                    candidates,
                    experts,
                    topic,
                    answer,
                    self.config.quota,
                    log_path=self.assessment_log,
                )
                if candidates
                else []
            )
        except GatewayError as exc:
            raise StageFailureError(role, exc) from exc

        assignment = assign_references(experts, refs)
        contributions: list[ExpertContribution] = []
        for expert in experts:
            assigned = assignment[expert.index]
            try:
                analysis, revision = self.expert_revise(
                    expert, draft, topic, context, assigned, answer=answer
                )
            except GatewayError as exc:
                raise StageFailureError(
                    role,
                    exc,
                    expert_index=expert.index,
                    accepted_refs=refs,
                    completed=contributions,
                ) from exc
            contributions.append(
                ExpertContribution(
                    index=expert.index,
                    analysis=analysis,
                    revision=revision,
                    assigned_chunk_ids=tuple(r.chunk.chunk_id for r in assigned),
                )
            )
        try:
            synthesis = self.synthesize(
                [(c.index, c.revision) for c in contributions], role, topic, context
            )
        except GatewayError as exc:
            raise StageFailureError(
                role, exc, accepted_refs=refs, completed=contributions
            ) from exc
        return StageTrace(
            role=role,
            accepted_refs=tuple(refs),
            per_expert=tuple(contributions),
            synthesis=synthesis,
            input_draft=draft,
            output_draft=synthesis,
        )

    def run(
        self,
        raw_draft: str,
        topic: str,
        answer: str,
        context: StudentContext,
    ) -> RefinementTrace:
        if not raw_draft:
            raise ValueError("raw_draft must be non-empty")
        stages: list[StageTrace] = []
        draft = raw_draft
        for role in self.config.stages:
            try:
                stage = self.run_stage(draft, topic, answer, context, role)
            except StageFailureError as failure:
                partial = None
                if stages:
                    partial = RefinementTrace(
                        trace_id=uuid.uuid4().hex,
                        topic=topic,
                        student_context=context,
                        raw_draft=raw_draft,
                        stages=tuple(stages),
                        final=stages[-1].output_draft,
                    )
                raise PipelineFailureError(failure, partial) from failure
            stages.append(stage)
            draft = stage.output_draft
        return RefinementTrace(
            trace_id=uuid.uuid4().hex,
            topic=topic,
            student_context=context,
            raw_draft=raw_draft,
            stages=tuple(stages),
            final=draft,
        )


# ------------------------------------------------------------- trace export


def trace_to_dict(trace: RefinementTrace) -> dict:
    return {
        "trace_id": trace.trace_id,
        "topic": trace.topic,
        "student_profile": trace.student_context.profile,
        "student_history": [list(t) for t in trace.student_context.history],
        "raw_draft": trace.raw_draft,
        "final": trace.final,
        "stages": [
            {
                "role": stage.role.value,
                "input_draft": stage.input_draft,
                "output_draft": stage.output_draft,
                "synthesis": stage.synthesis,
                "accepted_refs": [
                    {
                        "chunk_id": ref.chunk.chunk_id,
                        "similarity": ref.similarity,
                        "accepts": ref.tally.accepts,
                        "rejects": ref.tally.rejects,
                    }
                    for ref in stage.accepted_refs
                ],
                "per_expert": [
                    {
                        "index": c.index,
                        "analysis": c.analysis,
                        "revision": c.revision,
                        "assigned_chunk_ids": list(c.assigned_chunk_ids),
                    }
                    for c in stage.per_expert
                ],
            }
            for stage in trace.stages
        ],
    }


class TraceStore:
    """One JSON file per refinement trace, for audit and dataset provenance."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, trace_id: str) -> Path:
        return self.root / f"{trace_id}.json"

    def save(self, trace: RefinementTrace) -> Path:
        path = self.path(trace.trace_id)
        path.write_text(
            json.dumps(trace_to_dict(trace), ensure_ascii=False, indent=2), encoding="utf-8"
        )
        return path

    def load(self, trace_id: str) -> dict:
        return json.loads(self.path(trace_id).read_text(encoding="utf-8"))

    def exists(self, trace_id: str) -> bool:
        return self.path(trace_id).exists()
