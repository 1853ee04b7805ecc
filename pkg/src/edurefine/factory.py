"""Preference-pair dataset production.

Each record pairs one tutored exchange (topic, simulated student answer) with
two replies: the full panel-refined response as `chosen` and a plain
completion from a weaker backend as `rejected`. Records go to a JSON Lines
file ready for preference-optimization trainers; every chosen reply keeps a
link to the refinement trace that produced it.
"""

from __future__ import annotations

import json
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .experts import PersonaLibrary
from .gateway import Gateway, make_request
from .knowledge import KnowledgeStore
from .pipeline import (
    PipelineConfig,
    RefinementPipeline,
    StudentContext,
    TraceStore,
)

TOPIC_ATTEMPTS = 5

RECORD_FIELDS = (
    "record_id",
    "Q",
    "A",
    "chosen",
    "rejected",
    "trace_id",
    "strong_backend",
    "weak_backend",
    "created_at",
)

_TOPIC_SYSTEM = "[ROLE:topic] You open and steer a literature discussion for students."
_STUDENT_SYSTEM = "[ROLE:student] You answer discussion topics in a student's own voice."
_TUTOR_SYSTEM = "[ROLE:tutor] You reply to a student in a literature discussion."

_TOPIC_PROMPT = """\
Propose the next discussion topic about "{work_title}" for {grade_band} students
(language: {language}). One sentence, phrased as an open question.
Avoid repeating any prior topic:
{history}
attempt:{attempt}
"""

_ANSWER_PROMPT = """\
Discussion topic: {topic}
Student profile: {profile}
Answer the topic in this student's voice, a few sentences.
"""

_DRAFT_PROMPT = """\
Discussion topic: {topic}
Student profile: {profile}
Student answer: {answer}
Write the tutor's reply to this student.
"""


class FactoryError(Exception):
    pass


class TopicExhaustedError(FactoryError):
    pass


@dataclass(frozen=True)
class Scenario:
    work_title: str
    grade_band: str = "primary school"
    language: str = "en"

    def __post_init__(self) -> None:
        if not self.work_title:
            raise ValueError("work_title must be non-empty")


@dataclass(frozen=True)
class PreferenceRecord:
    record_id: str
    Q: str
    A: str
    chosen: str
    rejected: str
    trace_id: str
    strong_backend: str
    weak_backend: str
    created_at: str

    def __post_init__(self) -> None:
        for name in ("Q", "A", "chosen", "rejected"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.chosen == self.rejected:
            raise ValueError("chosen must differ from rejected")

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in RECORD_FIELDS}


@dataclass(frozen=True)
class GenerationJob:
    count: int
    seed: int
    scenario: Scenario
    pipeline: PipelineConfig
    strong_backend: str
    weak_backend: str
    student_backend: str

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.strong_backend == self.weak_backend:
            raise ValueError("strong and weak backends must differ")


@dataclass(frozen=True)
class JobReport:
    requested: int
    produced: int
    failed: int
    output_path: str
    errors: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    valid_count: int
    errors: tuple[tuple[int, str], ...] = ()


@dataclass
class DialogueFactory:
    gateway: Gateway
    store: KnowledgeStore
    personas: PersonaLibrary
    trace_store: TraceStore
    roster: list[str] = field(default_factory=lambda: load_roster())
    assessment_log: str | None = None

    # ------------------------------------------------------------ generation

    def generate_topic(self, scenario: Scenario, history: list[str], backend_id: str) -> str:
        """A topic distinct (exact string) from every history entry."""
        seen = set(history)
        history_block = "\n".join(f"- {t}" for t in history) if history else "(none yet)"
        for attempt in range(1, TOPIC_ATTEMPTS + 1):
            prompt = _TOPIC_PROMPT.format(
                work_title=scenario.work_title,
                grade_band=scenario.grade_band,
                language=scenario.language,
                history=history_block,
                attempt=attempt,
            )
            topic = self.gateway.complete(make_request(backend_id, _TOPIC_SYSTEM, prompt)).text
            if topic not in seen:
                return topic
        raise TopicExhaustedError(
            f"no distinct topic after {TOPIC_ATTEMPTS} attempts ({len(history)} prior topics)"
        )

    def simulate_answer(self, topic: str, student: StudentContext, backend_id: str) -> str:
        if not topic:
            raise ValueError("topic must be non-empty")
        prompt = _ANSWER_PROMPT.format(topic=topic, profile=student.profile)
        return self.gateway.complete(make_request(backend_id, _STUDENT_SYSTEM, prompt)).text

    def draft_reply(
        self, topic: str, answer: str, student: StudentContext, backend_id: str
    ) -> str:
        """Zero-shot tutor reply; both the strong raw draft and the weak
        rejected response come from this same prompt."""
        prompt = _DRAFT_PROMPT.format(topic=topic, profile=student.profile, answer=answer)
        return self.gateway.complete(make_request(backend_id, _TUTOR_SYSTEM, prompt)).text

    def produce_record(
        self, job: GenerationJob, topic: str, student: StudentContext
    ) -> PreferenceRecord:
        """One (Q, A, chosen, rejected) record; nothing persists on failure."""
        answer = self.simulate_answer(topic, student, job.student_backend)
        raw = self.draft_reply(topic, answer, student, job.strong_backend)
        pipeline = RefinementPipeline(
            self.gateway,
            self.store,
            self.personas,
            job.pipeline,
            backend_id=job.strong_backend,
            assessment_log=self.assessment_log,
        )
        trace = pipeline.run(raw, topic, answer, student)
        rejected = self.draft_reply(topic, answer, student, job.weak_backend)
        record = PreferenceRecord(
            record_id=uuid.uuid4().hex,
            Q=topic,
            A=answer,
            chosen=trace.final,
            rejected=rejected,
            trace_id=trace.trace_id,
            strong_backend=job.strong_backend,
            weak_backend=job.weak_backend,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        self.trace_store.save(trace)
        return record

    def run_job(
        self,
        job: GenerationJob,
        output_path: str | Path,
        parallelism: int = 1,
    ) -> JobReport:
        """Produce `job.count` records into a JSON Lines file plus a report
        sidecar. Topics are fixed up front so record contents do not depend on
        completion order."""
        output_path = Path(output_path)
        output_path.parent.mkdir(parents=True, exist_ok=True)

        topics: list[str] = []
        for _ in range(job.count):
            topics.append(self.generate_topic(job.scenario, topics, job.strong_backend))
        students = [
            StudentContext(profile=self.roster[(job.seed + i) % len(self.roster)])
            for i in range(job.count)
        ]

        def make(i: int) -> PreferenceRecord:
            return self.produce_record(job, topics[i], students[i])

        produced = 0
        errors: list[tuple[int, str]] = []
        with output_path.open("w", encoding="utf-8") as handle:
            if parallelism <= 1:
                outcomes = []
                for i in range(job.count):
                    try:
                        outcomes.append((i, make(i), None))
                    except Exception as exc:
                        outcomes.append((i, None, exc))
            else:
                with ThreadPoolExecutor(max_workers=parallelism) as pool:
                    futures = {i: pool.submit(make, i) for i in range(job.count)}
                    outcomes = []
                    for i, future in futures.items():
                        try:
                            outcomes.append((i, future.result(), None))
                        except Exception as exc:
                            outcomes.append((i, None, exc))
            for i, record, exc in outcomes:
                if record is not None:
                    handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
                    produced += 1
                else:
                    errors.append((i, str(exc)))

        report = JobReport(
            requested=job.count,
            produced=produced,
            failed=len(errors),
            output_path=str(output_path),
            errors=tuple(errors),
        )
        sidecar = output_path.with_suffix(output_path.suffix + ".report.json")
        sidecar.write_text(
            json.dumps(
                {
                    "requested": report.requested,
                    "produced": report.produced,
                    "failed": report.failed,
                    "output_path": report.output_path,
                    "errors": [list(e) for e in report.errors],
                    "seed": job.seed,
                    "scenario": job.scenario.work_title,
                },
                ensure_ascii=False,
                indent=2,
            ),
            encoding="utf-8",
        )
        return report


def load_roster(path: str | Path | None = None) -> list[str]:
    """Student profiles used for answer simulation; small editable file."""
    roster_path = Path(path) if path else Path(__file__).parent / "assets" / "students.json"
    profiles = json.loads(roster_path.read_text(encoding="utf-8"))
    if not isinstance(profiles, list) or not all(isinstance(p, str) and p for p in profiles):
        raise FactoryError(f"roster {roster_path} must be a JSON list of non-empty strings")
    return profiles


def validate_dataset(
    path: str | Path, traces_dir: str | Path | None = None
) -> ValidationReport:
    """Check every line of a dataset file against the record contract.

    With `traces_dir`, also dereference each record's trace and require the
    trace final to match the chosen text byte for byte.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FactoryError(f"unreadable-file: {exc}") from exc
    trace_store = TraceStore(traces_dir) if traces_dir is not None else None

    valid = 0
    errors: list[tuple[int, str]] = []
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            errors.append((line_no, "malformed-record"))
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError:
            errors.append((line_no, "malformed-record"))
            continue
        if not isinstance(row, dict):
            errors.append((line_no, "malformed-record"))
            continue
        problem = None
        for name in RECORD_FIELDS:
            if name not in row:
                problem = f"missing-field:{name}"
                break
            if not isinstance(row[name], str) or not row[name]:
                problem = f"empty-field:{name}"
                break
        if problem is None and row["chosen"] == row["rejected"]:
            problem = "chosen-equals-rejected"
        if problem is None and trace_store is not None:
            if not trace_store.exists(row["trace_id"]):
                problem = "missing-trace"
            elif trace_store.load(row["trace_id"])["final"] != row["chosen"]:
                problem = "trace-final-mismatch"
        if problem is None:
            valid += 1
        else:
            errors.append((line_no, problem))
    return ValidationReport(valid_count=valid, errors=tuple(errors))
