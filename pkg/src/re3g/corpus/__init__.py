from .history import AGENT_MARK, USER_MARK, render_turn, serialize_history
from .ingest import (
    IngestError,
    ingest_dialogues,
    ingest_documents,
    read_passages,
    write_passages,
)
from .spans import find_span_offsets
from .split import SplitPolicy, StructuralPolicy, WindowPolicy, split_corpus, split_passages
from .types import (
    AGENT_ROLE,
    USER_ROLE,
    DialogueContext,
    DialogueTurn,
    Document,
    GroundedExample,
    Passage,
    validate_gold_spans,
)

__all__ = [
    "AGENT_MARK",
    "AGENT_ROLE",
    "DialogueContext",
    "DialogueTurn",
    "Document",
    "GroundedExample",
    "IngestError",
    "Passage",
    "SplitPolicy",
    "StructuralPolicy",
    "USER_MARK",
    "USER_ROLE",
    "WindowPolicy",
    "find_span_offsets",
    "ingest_dialogues",
    "ingest_documents",
    "read_passages",
    "render_turn",
    "serialize_history",
    "split_corpus",
    "split_passages",
    "validate_gold_spans",
    "write_passages",
]
