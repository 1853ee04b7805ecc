"""Tutoring-dialogue refinement by retrieval-augmented expert panels."""

from .evaluation import Dimension, EvalHarness, build_eval_set, fleiss_kappa, score
from .experts import ExpertProfile, PersonaLibrary, Role
from .factory import DialogueFactory, GenerationJob, PreferenceRecord, Scenario, validate_dataset
from .gateway import BackendDescriptor, ChatRequest, ChatResponse, Gateway, MockBackend
from .knowledge import KnowledgeStore, RawDocument, SourceKind, chunk_text, cosine
from .pipeline import PipelineConfig, RefinementPipeline, RefinementTrace, StudentContext
from .reflection import filter_references, tally_votes

__all__ = [
    "BackendDescriptor",
    "ChatRequest",
    "ChatResponse",
    "DialogueFactory",
    "Dimension",
    "EvalHarness",
    "ExpertProfile",
    "Gateway",
    "GenerationJob",
    "KnowledgeStore",
    "MockBackend",
    "PersonaLibrary",
    "PipelineConfig",
    "PreferenceRecord",
    "RawDocument",
    "RefinementPipeline",
    "RefinementTrace",
    "Role",
    "Scenario",
    "SourceKind",
    "StudentContext",
    "build_eval_set",
    "chunk_text",
    "cosine",
    "filter_references",
    "fleiss_kappa",
    "score",
    "tally_votes",
    "validate_dataset",
]

__version__ = "0.1.0"
