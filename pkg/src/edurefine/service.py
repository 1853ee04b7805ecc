"""Operational shell: durable session/eval state and the HTTP API.

Persistence is append-only JSON Lines journals plus periodic snapshots under
``data_dir`` — no external database. Every mutating endpoint journals its
effect before the response goes out.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query
from pydantic import BaseModel

from .config import AppConfig, build_gateway
from .evaluation import (
    Dimension,
    DuplicateChoiceError,
    EvalError,
    EvalHarness,
    EvalItem,
    Assignment,
    Choice,
    UnknownItemError,
)
from .experts import PersonaLibrary
from .factory import (
    DialogueFactory,
    GenerationJob,
    JobReport,
    Scenario,
    load_roster,
)
from .gateway import GatewayError
from .knowledge import KnowledgeStore, load_manifest
from .pipeline import (
    PipelineFailureError,
    RefinementPipeline,
    StudentContext,
    TraceStore,
)

SNAPSHOT_EVERY = 50


class ServiceError(Exception):
    pass


class UnknownSessionError(ServiceError):
    pass


class ClosedSessionError(ServiceError):
    pass


class UnknownVolunteerError(ServiceError):
    pass


@dataclass
class Turn:
    topic: str
    answer: str
    final_response: str
    trace_id: str


@dataclass
class SessionState:
    session_id: str
    scenario: Scenario
    student_profile: str
    turns: list[Turn] = field(default_factory=list)
    current_topic: str = ""
    status: str = "open"

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "scenario": {
                "work_title": self.scenario.work_title,
                "grade_band": self.scenario.grade_band,
                "language": self.scenario.language,
            },
            "student_profile": self.student_profile,
            "turns": [
                {
                    "topic": t.topic,
                    "answer": t.answer,
                    "final_response": t.final_response,
                    "trace_id": t.trace_id,
                }
                for t in self.turns
            ],
            "current_topic": self.current_topic,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "SessionState":
        return cls(
            session_id=row["session_id"],
            scenario=Scenario(**row["scenario"]),
            student_profile=row["student_profile"],
            turns=[Turn(**t) for t in row["turns"]],
            current_topic=row["current_topic"],
            status=row["status"],
        )


def _append_fsync(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(payload, ensure_ascii=False) + "\n")
        handle.flush()
        os.fsync(handle.fileno())


class SessionStore:
    """Append-only session journal; each event carries the full session state,
    so replay is last-event-wins. A snapshot bounds replay length."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.journal = self.root / "journal.jsonl"
        self.snapshot = self.root / "snapshot.json"
        self.sessions: dict[str, SessionState] = {}
        self._seq = 0
        self._lock = threading.Lock()
        self._load()

    def _load(self) -> None:
        last_seq = 0
        if self.snapshot.exists():
            snap = json.loads(self.snapshot.read_text(encoding="utf-8"))
            last_seq = snap["last_seq"]
            self.sessions = {
                row["session_id"]: SessionState.from_dict(row) for row in snap["sessions"]
            }
        self._seq = last_seq
        if self.journal.exists():
            with self.journal.open("r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    event = json.loads(line)
                    if event["seq"] <= last_seq:
                        continue
                    state = SessionState.from_dict(event["session"])
                    self.sessions[state.session_id] = state
                    self._seq = max(self._seq, event["seq"])

    def record(self, session: SessionState) -> None:
        with self._lock:
            self._seq += 1
            _append_fsync(self.journal, {"seq": self._seq, "session": session.to_dict()})
            self.sessions[session.session_id] = session
            if self._seq % SNAPSHOT_EVERY == 0:
                self.snapshot.write_text(
                    json.dumps(
                        {
                            "last_seq": self._seq,
                            "sessions": [s.to_dict() for s in self.sessions.values()],
                        },
                        ensure_ascii=False,
                    ),
                    encoding="utf-8",
                )

    def get(self, session_id: str) -> SessionState:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise UnknownSessionError(f"unknown session {session_id!r}") from None


class EvalStore:
    """Durable mirror of the eval harness: item table (server-side, includes
    the hidden side map), assignments, and an append-only choice journal."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.items_path = self.root / "items.json"
        self.assignments_path = self.root / "assignments.json"
        self.choices_path = self.root / "choices.jsonl"

    def save_items(self, items: list[EvalItem]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        rows = [
            {
                "item_id": i.item_id,
                "Q": i.Q,
                "A": i.A,
                "left": i.left,
                "right": i.right,
                "left_is": i.left_is,
            }
            for i in items
        ]
        self.items_path.write_text(json.dumps(rows, ensure_ascii=False), encoding="utf-8")
        # a fresh item set invalidates prior assignments and choices
        for stale in (self.assignments_path, self.choices_path):
            if stale.exists():
                stale.unlink()

    def save_assignments(self, assignments: list[Assignment]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        rows = [
            {
                "volunteer_id": a.volunteer_id,
                "dimension": a.dimension.value,
                "item_ids": list(a.item_ids),
            }
            for a in assignments
        ]
        self.assignments_path.write_text(json.dumps(rows, ensure_ascii=False), encoding="utf-8")

    def journal_choice(self, choice: Choice) -> None:
        _append_fsync(
            self.choices_path,
            {
                "volunteer_id": choice.volunteer_id,
                "item_id": choice.item_id,
                "verdict": choice.verdict,
                "submitted_at": choice.submitted_at,
                "dimension": choice.dimension.value,
            },
        )

    def load_into(self, harness: EvalHarness) -> None:
        if self.items_path.exists():
            rows = json.loads(self.items_path.read_text(encoding="utf-8"))
            harness.add_items([EvalItem(**row) for row in rows])
        if self.assignments_path.exists():
            for row in json.loads(self.assignments_path.read_text(encoding="utf-8")):
                harness.restore_assignment(
                    Assignment(
                        volunteer_id=row["volunteer_id"],
                        dimension=Dimension(row["dimension"]),
                        item_ids=tuple(row["item_ids"]),
                    )
                )
        if self.choices_path.exists():
            with self.choices_path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if not line:
                        continue
                    row = json.loads(line)
                    harness.submit(
                        volunteer_id=row["volunteer_id"],
                        item_id=row["item_id"],
                        verdict=row["verdict"],
                        dimension=Dimension(row["dimension"]),
                        submitted_at=row["submitted_at"],
                    )


class JobManager:
    def __init__(self) -> None:
        self._jobs: dict[str, dict] = {}
        self._lock = threading.Lock()

    def submit(self, job_id: str, runner) -> None:
        with self._lock:
            self._jobs[job_id] = {"status": "running", "report": None, "error": None}

        def run() -> None:
            try:
                report: JobReport = runner()
                with self._lock:
                    self._jobs[job_id].update(
                        status="done",
                        report={
                            "requested": report.requested,
                            "produced": report.produced,
                            "failed": report.failed,
                            "output_path": report.output_path,
                        },
                    )
            except Exception as exc:
                with self._lock:
                    self._jobs[job_id].update(status="failed", error=str(exc))

        threading.Thread(target=run, daemon=True).start()

    def status(self, job_id: str) -> dict:
        with self._lock:
            if job_id not in self._jobs:
                raise ServiceError(f"unknown job {job_id!r}")
            return dict(self._jobs[job_id])

    def wait_all(self, timeout: float = 60.0) -> None:
        import time

        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._lock:
                if all(j["status"] != "running" for j in self._jobs.values()):
                    return
            time.sleep(0.02)


class ServiceState:
    """Everything the HTTP layer and the CLI share for one data_dir."""

    def __init__(self, config: AppConfig) -> None:
        self.config = config
        config.data_dir.mkdir(parents=True, exist_ok=True)
        self.gateway = build_gateway(config)
        self.store = KnowledgeStore(self.gateway, config.roles.embed)
        if config.kb_snapshot_path.exists():
            self.store.load(config.kb_snapshot_path)
        self.personas = PersonaLibrary()
        self.trace_store = TraceStore(config.traces_dir)
        roster = load_roster(config.roster_path) if config.roster_path else load_roster()
        self.factory = DialogueFactory(
            gateway=self.gateway,
            store=self.store,
            personas=self.personas,
            trace_store=self.trace_store,
            roster=roster,
            assessment_log=str(config.assessment_log_path),
        )
        self.harness = EvalHarness()
        self.eval_store = EvalStore(config.eval_dir)
        self.eval_store.load_into(self.harness)
        # operator-supplied volunteer -> allowed-dimensions roster; open
        # access when absent
        self.eval_roster: dict[str, set[str]] | None = None
        if config.eval_roster_path is not None:
            rows = json.loads(config.eval_roster_path.read_text(encoding="utf-8"))
            self.eval_roster = {vol: set(dims) for vol, dims in rows.items()}
        self.sessions = SessionStore(config.sessions_dir)
        self.jobs = JobManager()
        self._session_locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._session_locks.setdefault(session_id, threading.Lock())

    # -------------------------------------------------------------- sessions

    def start_session(self, scenario: Scenario, student_profile: str) -> SessionState:
        if not student_profile:
            raise ValueError("student_profile must be non-empty")
        topic = self.factory.generate_topic(scenario, [], self.config.roles.strong)
        session = SessionState(
            session_id=uuid.uuid4().hex,
            scenario=scenario,
            student_profile=student_profile,
            current_topic=topic,
        )
        self.sessions.record(session)
        return session

    def post_answer(self, session_id: str, answer: str) -> tuple[str, str, str]:
        if not answer:
            raise ValueError("answer must be non-empty")
        with self._session_lock(session_id):
            session = self.sessions.get(session_id)
            if session.status != "open":
                raise ClosedSessionError(f"session {session_id} is closed")
            topic = session.current_topic
            context = StudentContext(
                profile=session.student_profile,
                history=tuple((t.topic, t.answer, t.final_response) for t in session.turns),
            )
            raw = self.factory.draft_reply(
                topic, answer, context, self.config.roles.strong
            )
            pipeline = RefinementPipeline(
                self.gateway,
                self.store,
                self.personas,
                self.config.pipeline,
                backend_id=self.config.roles.strong,
                assessment_log=str(self.config.assessment_log_path),
            )
            try:
                trace = pipeline.run(raw, topic, answer, context)
            except PipelineFailureError as failure:
                partial_id = None
                if failure.partial is not None:
                    self.trace_store.save(failure.partial)
                    partial_id = failure.partial.trace_id
                raise ServiceError(
                    f"stage-failure:{failure.failure.role.value}:partial={partial_id}"
                ) from failure
            self.trace_store.save(trace)
            prior_topics = [t.topic for t in session.turns] + [topic]
            next_topic = self.factory.generate_topic(
                session.scenario, prior_topics, self.config.roles.strong
            )
            session.turns.append(
                Turn(
                    topic=topic,
                    answer=answer,
                    final_response=trace.final,
                    trace_id=trace.trace_id,
                )
            )
            session.current_topic = next_topic
            cap = self.config.max_turns_per_session
            if cap and len(session.turns) >= cap:
                session.status = "closed"
            self.sessions.record(session)
            return trace.final, trace.trace_id, next_topic

    # -------------------------------------------------------------- datasets

    def submit_generation_job(self, count: int, seed: int | None, parallelism: int = 1) -> str:
        job_id = uuid.uuid4().hex[:12]
        job = GenerationJob(
            count=count,
            seed=self.config.seeds.dataset if seed is None else seed,
            scenario=self.config.scenario,
            pipeline=self.config.pipeline,
            strong_backend=self.config.roles.strong,
            weak_backend=self.config.roles.weak,
            student_backend=self.config.roles.student,
        )
        output = self.config.datasets_dir / f"{job_id}.jsonl"
        self.jobs.submit(job_id, lambda: self.factory.run_job(job, output, parallelism))
        return job_id

    # ------------------------------------------------------------------ eval

    def build_eval_set(self, dataset_path: str | Path, seed: int | None) -> int:
        records = []
        path = Path(dataset_path)
        if not path.exists():
            raise ServiceError(f"dataset not found: {path}")
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                records.append(json.loads(line))
        items = self.harness.build_set(
            records, self.config.seeds.eval if seed is None else seed
        )
        self.eval_store.save_items(items)
        return len(items)

    def assignment_seed(self, volunteer_id: str, dimension: Dimension) -> int:
        digest = hashlib.sha256(
            f"{self.config.seeds.eval}:{volunteer_id}:{dimension.value}".encode("utf-8")
        ).digest()
        return int.from_bytes(digest[:8], "big")

    def get_assignment(self, volunteer_id: str, dimension: Dimension) -> dict:
        if self.eval_roster is not None:
            allowed = self.eval_roster.get(volunteer_id)
            if allowed is None:
                raise UnknownVolunteerError(f"volunteer {volunteer_id!r} not on the roster")
            if dimension.value not in allowed:
                raise UnknownVolunteerError(
                    f"volunteer {volunteer_id!r} not rostered for dimension {dimension.value}"
                )
        fresh = (volunteer_id, dimension) not in self.harness.assignments
        assignment = self.harness.assignment_for(
            volunteer_id, dimension, self.assignment_seed(volunteer_id, dimension)
        )
        if fresh:
            self.eval_store.save_assignments(list(self.harness.assignments.values()))
        return self.harness.assignment_view(assignment)

    def submit_choice(
        self,
        volunteer_id: str,
        item_id: str,
        verdict: str,
        dimension: Dimension | None,
    ) -> dict:
        choice = self.harness.submit(volunteer_id, item_id, verdict, dimension)
        self.eval_store.journal_choice(choice)
        assignment = self.harness.assignments.get((volunteer_id, choice.dimension))
        view = self.harness.assignment_view(assignment) if assignment else None
        return {
            "accepted": True,
            "item_id": item_id,
            "verdict": verdict,
            "progress": view["progress"] if view else None,
        }


def _bad_request(code: str, detail: str = "") -> HTTPException:
    return HTTPException(status_code=400, detail={"error": code, "detail": detail})


class SessionCreate(BaseModel):
    student_profile: str
    work_title: str | None = None
    grade_band: str | None = None
    language: str | None = None


class AnswerBody(BaseModel):
    answer: str


class JobBody(BaseModel):
    count: int
    seed: int | None = None
    parallelism: int = 1


class EvalSetBody(BaseModel):
    dataset_path: str
    seed: int | None = None


class ChoiceBody(BaseModel):
    item_id: str
    verdict: str
    volunteer_id: str | None = None
    dimension: str | None = None


def _parse_dimension(value: str) -> Dimension:
    try:
        return Dimension(value)
    except ValueError:
        raise _bad_request("unknown-dimension", value) from None


def create_app(config: AppConfig, state: ServiceState | None = None) -> FastAPI:
    state = state or ServiceState(config)
    app = FastAPI(title="edurefine", version="0.1.0")
    app.state.service = state

    @app.post("/sessions")
    def create_session(body: SessionCreate):
        scenario = state.config.scenario
        if body.work_title is not None:
            if not body.work_title:
                raise _bad_request("invalid-scenario", "work_title must be non-empty")
            scenario = Scenario(
                work_title=body.work_title,
                grade_band=body.grade_band or scenario.grade_band,
                language=body.language or scenario.language,
            )
        try:
            session = state.start_session(scenario, body.student_profile)
        except (ValueError, GatewayError) as exc:
            raise _bad_request("invalid-session", str(exc))
        return session.to_dict()

    @app.get("/sessions/{session_id}")
    def fetch_session(session_id: str):
        try:
            return state.sessions.get(session_id).to_dict()
        except UnknownSessionError as exc:
            raise HTTPException(status_code=404, detail={"error": "unknown-session", "detail": str(exc)})

    @app.post("/sessions/{session_id}/answer")
    def answer_session(session_id: str, body: AnswerBody):
        try:
            final, trace_id, next_topic = state.post_answer(session_id, body.answer)
        except UnknownSessionError as exc:
            raise HTTPException(status_code=404, detail={"error": "unknown-session", "detail": str(exc)})
        except ClosedSessionError as exc:
            raise HTTPException(status_code=409, detail={"error": "closed-session", "detail": str(exc)})
        except ValueError as exc:
            raise _bad_request("invalid-answer", str(exc))
        except ServiceError as exc:
            raise HTTPException(status_code=502, detail={"error": "stage-failure", "detail": str(exc)})
        return {"final_response": final, "trace_id": trace_id, "next_topic": next_topic}

    @app.get("/kb/stats")
    def kb_stats():
        return {
            kind.value: {
                "doc_count": s.doc_count,
                "word_count": s.word_count,
                "chunk_count": s.chunk_count,
            }
            for kind, s in state.store.stats().items()
        }

    @app.post("/datasets/jobs", status_code=202)
    def create_job(body: JobBody):
        if body.count < 1:
            raise _bad_request("invalid-count", "count must be >= 1")
        job_id = state.submit_generation_job(body.count, body.seed, body.parallelism)
        return {"job_id": job_id, "status": "running"}

    @app.get("/datasets/jobs/{job_id}")
    def job_status(job_id: str):
        try:
            return state.jobs.status(job_id)
        except ServiceError as exc:
            raise HTTPException(status_code=404, detail={"error": "unknown-job", "detail": str(exc)})

    @app.post("/eval/sets")
    def build_set(body: EvalSetBody):
        try:
            count = state.build_eval_set(body.dataset_path, body.seed)
        except (ServiceError, EvalError, KeyError, json.JSONDecodeError) as exc:
            raise _bad_request("invalid-eval-set", str(exc))
        return {"item_count": count}

    @app.get("/eval/assignments")
    def get_assignment(
        dimension: str = Query(...),
        volunteer: str | None = Query(default=None),
        x_volunteer_id: str | None = Header(default=None),
    ):
        volunteer_id = volunteer or x_volunteer_id
        if not volunteer_id:
            raise _bad_request("missing-volunteer", "supply ?volunteer= or X-Volunteer-Id")
        dim = _parse_dimension(dimension)
        try:
            return state.get_assignment(volunteer_id, dim)
        except UnknownVolunteerError as exc:
            raise HTTPException(
                status_code=403, detail={"error": "unknown-volunteer", "detail": str(exc)}
            )
        except EvalError as exc:
            raise _bad_request("no-eval-set", str(exc))

    @app.post("/eval/choices")
    def post_choice(body: ChoiceBody, x_volunteer_id: str | None = Header(default=None)):
        volunteer_id = body.volunteer_id or x_volunteer_id
        if not volunteer_id:
            raise _bad_request("missing-volunteer", "supply volunteer_id or X-Volunteer-Id")
        dim = _parse_dimension(body.dimension) if body.dimension else None
        try:
            return state.submit_choice(volunteer_id, body.item_id, body.verdict, dim)
        except DuplicateChoiceError as exc:
            raise HTTPException(
                status_code=409, detail={"error": "duplicate-choice", "detail": str(exc)}
            )
        except UnknownItemError as exc:
            raise HTTPException(
                status_code=404, detail={"error": "unknown-item", "detail": str(exc)}
            )
        except (EvalError, ValueError) as exc:
            raise _bad_request("invalid-choice", str(exc))

    @app.get("/eval/reports/{dimension}")
    def get_report(dimension: str, per_volunteer: bool = Query(default=False)):
        dim = _parse_dimension(dimension)
        try:
            report = state.harness.report(dim, per_volunteer=per_volunteer)
        except EvalError as exc:
            raise HTTPException(status_code=404, detail={"error": "no-choices", "detail": str(exc)})
        return {
            "dimension": report.dimension.value,
            "n_choices": report.n_choices,
            "score": report.score,
            "kappa": report.kappa,
        }

    @app.get("/eval/rubric")
    def get_rubric(dimension: str | None = Query(default=None)):
        criteria = state.harness.rubric
        if dimension is not None:
            dim = _parse_dimension(dimension)
            criteria = [c for c in criteria if c.dimension is dim]
        return [
            {"id": c.id, "dimension": c.dimension.value, "text": c.text} for c in criteria
        ]

    return app


def ingest_manifest(state: ServiceState, manifest_path: str | Path, size: int | None = None,
                    overlap: int | None = None):
    """Shared by the CLI: ingest a corpus manifest and persist the snapshot."""
    docs = load_manifest(manifest_path)
    report = state.store.ingest(
        docs,
        size=size or state.config.chunking.size,
        overlap=overlap or state.config.chunking.overlap,
    )
    state.config.kb_snapshot_path.parent.mkdir(parents=True, exist_ok=True)
    state.store.save(state.config.kb_snapshot_path)
    return report
