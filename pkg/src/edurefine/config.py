"""Application configuration: YAML file with env-var overrides for secrets."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .experts import Role
from .factory import Scenario
from .gateway import (
    BackendDescriptor,
    Gateway,
    MockBackend,
    MockRule,
    RetryPolicy,
    SCRIPTED_MOCK,
)
from .pipeline import PipelineConfig


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ChunkingConfig:
    size: int = 512
    overlap: int = 64


@dataclass(frozen=True)
class SeedConfig:
    dataset: int = 0
    eval: int = 0


@dataclass(frozen=True)
class BackendRoles:
    strong: str
    weak: str
    student: str
    embed: str


@dataclass(frozen=True)
class BackendSpec:
    descriptor: BackendDescriptor
    mock_seed: int = 0
    mock_dimension: int = 32
    mock_rules: tuple[MockRule, ...] = ()
    mock_fail_needles: tuple[str, ...] = ()


@dataclass
class AppConfig:
    backends: list[BackendSpec]
    roles: BackendRoles
    data_dir: Path
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    scenario: Scenario = field(default_factory=lambda: Scenario(work_title="Robinson Crusoe"))
    http_bind: str = "127.0.0.1:8080"
    roster_path: Path | None = None
    eval_roster_path: Path | None = None  # volunteer -> allowed dimensions
    max_turns_per_session: int = 0  # 0 = unbounded
    max_inflight_remote: int = 8

    def __post_init__(self) -> None:
        ids = [spec.descriptor.id for spec in self.backends]
        if len(set(ids)) != len(ids):
            raise ConfigError("backend ids must be unique")
        known = set(ids)
        for name in ("strong", "weak", "student", "embed"):
            ref = getattr(self.roles, name)
            if ref not in known:
                raise ConfigError(f"roles.{name} references unknown backend {ref!r}")

    # --------------------------------------------------------- derived paths

    @property
    def kb_snapshot_path(self) -> Path:
        return self.data_dir / "kb" / "store.snap"

    @property
    def traces_dir(self) -> Path:
        return self.data_dir / "traces"

    @property
    def datasets_dir(self) -> Path:
        return self.data_dir / "datasets"

    @property
    def eval_dir(self) -> Path:
        return self.data_dir / "eval"

    @property
    def sessions_dir(self) -> Path:
        return self.data_dir / "sessions"

    @property
    def assessment_log_path(self) -> Path:
        return self.data_dir / "logs" / "assessments.jsonl"


def _parse_backend(row: dict) -> BackendSpec:
    retry = row.get("retry", {})
    descriptor = BackendDescriptor(
        id=row["id"],
        kind=row["kind"],
        endpoint=row.get("endpoint"),
        auth_token_env=row.get("auth_token_env"),
        retry=RetryPolicy(
            max_attempts=int(retry.get("max_attempts", 3)),
            backoff_ms=int(retry.get("backoff_ms", 200)),
        ),
        model=row.get("model"),
    )
    mock = row.get("mock", {})
    rules = tuple(
        MockRule(needles=tuple(rule["needles"]), template=rule["template"])
        for rule in mock.get("rules", [])
    )
    return BackendSpec(
        descriptor=descriptor,
        mock_seed=int(mock.get("seed", 0)),
        mock_dimension=int(mock.get("dimension", 32)),
        mock_rules=rules,
        mock_fail_needles=tuple(mock.get("fail_needles", [])),
    )


def _parse_pipeline(row: dict) -> PipelineConfig:
    stages = tuple(Role(s) for s in row.get("stages", ["T", "P", "E"]))
    experts = {Role(k): int(v) for k, v in row.get("experts_per_group", {}).items()}
    for role in stages:
        experts.setdefault(role, 3)
    return PipelineConfig(
        stages=stages,
        experts_per_group=experts,
        retrieval_k=int(row.get("retrieval_k", 18)),
        quota=int(row.get("quota", 3)),
    )


def load_config(path: str | Path) -> AppConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    try:
        backends = [_parse_backend(row) for row in raw["backends"]]
        roles = BackendRoles(**raw["roles"])
        data_dir = Path(os.environ.get("EDUREFINE_DATA_DIR", raw["data_dir"]))
        scenario_row = raw.get("scenario", {"work_title": "Robinson Crusoe"})
        session_row = raw.get("session", {})
        return AppConfig(
            backends=backends,
            roles=roles,
            data_dir=data_dir,
            pipeline=_parse_pipeline(raw.get("pipeline", {})),
            chunking=ChunkingConfig(**raw.get("chunking", {})),
            seeds=SeedConfig(**raw.get("seeds", {})),
            scenario=Scenario(**scenario_row),
            http_bind=raw.get("http_bind", "127.0.0.1:8080"),
            roster_path=Path(raw["roster"]) if raw.get("roster") else None,
            eval_roster_path=Path(raw["eval_roster"]) if raw.get("eval_roster") else None,
            max_turns_per_session=int(session_row.get("max_turns", 0)),
            max_inflight_remote=int(raw.get("max_inflight_remote", 8)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc


def default_mock_config(data_dir: str | Path, seed: int = 0) -> AppConfig:
    """All-mock configuration: offline, deterministic, no env required."""
    backends = [
        BackendSpec(
            descriptor=BackendDescriptor(id="strong-mock", kind=SCRIPTED_MOCK), mock_seed=seed
        ),
        BackendSpec(
            descriptor=BackendDescriptor(id="weak-mock", kind=SCRIPTED_MOCK),
            mock_seed=seed + 1,
        ),
    ]
    return AppConfig(
        backends=backends,
        roles=BackendRoles(
            strong="strong-mock", weak="weak-mock", student="strong-mock", embed="strong-mock"
        ),
        data_dir=Path(data_dir),
        seeds=SeedConfig(dataset=seed, eval=seed),
    )


def build_gateway(config: AppConfig) -> Gateway:
    gateway = Gateway(max_inflight_remote=config.max_inflight_remote)
    for spec in config.backends:
        if spec.descriptor.kind == SCRIPTED_MOCK:
            mock = MockBackend(
                spec.descriptor,
                seed=spec.mock_seed,
                dimension=spec.mock_dimension,
                rules=list(spec.mock_rules),
                fail_needles=list(spec.mock_fail_needles),
            )
            gateway.register(spec.descriptor, mock)
        else:
            gateway.register(spec.descriptor)
    return gateway
