"""Role-scoped expert personas for the refinement panels.

Personas are editable template files (one per role) with a ``{tag}``
placeholder; the tag doubles as the role marker the scripted mock backend
echoes, which is what makes pipeline traces assertable in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .knowledge import SourceKind

ASSETS_DIR = Path(__file__).parent / "assets"

VALUE_DIMENSIONS = ("language style", "vocabulary usage", "logical connections")


class Role(str, Enum):
    TEACHER = "T"
    PSYCHOLOGIST = "P"
    ETHICS = "E"


PERSONA_FILES = {
    Role.TEACHER: "teacher.txt",
    Role.PSYCHOLOGIST: "psychologist.txt",
    Role.ETHICS: "ethicist.txt",
}

# which knowledge sources each role draws references from
DEFAULT_SOURCE_SCOPES: dict[Role, frozenset[SourceKind]] = {
    Role.TEACHER: frozenset(
        {SourceKind.CLASS_RECORDS, SourceKind.TEACHING_THEORY, SourceKind.LITERATURE_WORKS}
    ),
    Role.PSYCHOLOGIST: frozenset(
        {SourceKind.EDU_PSYCH_THEORY, SourceKind.LITERATURE_WORKS}
    ),
    Role.ETHICS: frozenset(
        {SourceKind.SAFETY_PROMPTS, SourceKind.LITERATURE_WORKS}
    ),
}


@dataclass(frozen=True)
class ExpertProfile:
    role: Role
    index: int
    persona: str
    source_scope: frozenset[SourceKind]
    value_dimensions: tuple[str, ...] = VALUE_DIMENSIONS

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("expert index is 1-based")
        if not self.persona:
            raise ValueError("persona must be non-empty")
        if not self.source_scope:
            raise ValueError("source_scope must be non-empty")

    @property
    def tag(self) -> str:
        return f"{self.role.value}{self.index}"


@dataclass
class PersonaLibrary:
    """Loads and renders the per-role persona templates."""

    root: Path = field(default_factory=lambda: ASSETS_DIR / "personas")
    source_scopes: dict[Role, frozenset[SourceKind]] = field(
        default_factory=lambda: dict(DEFAULT_SOURCE_SCOPES)
    )

    def _template(self, role: Role) -> str:
        return (self.root / PERSONA_FILES[role]).read_text(encoding="utf-8").strip()

    def expert(self, role: Role, index: int) -> ExpertProfile:
        persona = self._template(role).format(tag=f"{role.value}{index}")
        return ExpertProfile(
            role=role, index=index, persona=persona, source_scope=self.source_scopes[role]
        )

    def experts_for(self, role: Role, count: int) -> list[ExpertProfile]:
        if count < 1:
            raise ValueError("expert count must be >= 1")
        return [self.expert(role, index) for index in range(1, count + 1)]

    def group_persona(self, role: Role) -> str:
        return self._template(role).format(tag=role.value)
