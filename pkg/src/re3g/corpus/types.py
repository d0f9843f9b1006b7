"""Core data model: documents, passages, dialogue contexts, grounded examples.

All objects here are frozen after construction and safe to share across
threads. Offsets are always character offsets into the owning document body.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

USER_ROLE = "user"
AGENT_ROLE = "agent"


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    source_meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.body:
            raise ValueError(f"document {self.doc_id!r} has empty body")


@dataclass(frozen=True)
class Passage:
    """A retrievable text unit. ``text`` is always the exact body slice
    ``[char_start, char_end)`` of its source document."""

    passage_id: str
    doc_id: str
    text: str
    char_start: int
    char_end: int
    title: str = ""

    def __post_init__(self):
        if not (0 <= self.char_start < self.char_end):
            raise ValueError(
                f"passage {self.passage_id!r}: bad offsets "
                f"[{self.char_start}, {self.char_end})"
            )
        if len(self.text) != self.char_end - self.char_start:
            raise ValueError(
                f"passage {self.passage_id!r}: text length {len(self.text)} "
                f"does not match offsets [{self.char_start}, {self.char_end})"
            )


@dataclass(frozen=True)
class DialogueTurn:
    role: str
    text: str

    def __post_init__(self):
        if self.role not in (USER_ROLE, AGENT_ROLE):
            raise ValueError(f"unknown role {self.role!r}")
        if not self.text.strip():
            raise ValueError("turn text must be non-empty after trimming")


@dataclass(frozen=True)
class DialogueContext:
    """Ordered turns ending with the user turn being answered.

    Roles need not strictly alternate; real logs repeat roles.
    """

    turns: tuple[DialogueTurn, ...]

    def __post_init__(self):
        if not self.turns:
            raise ValueError("dialogue context must contain at least one turn")
        if self.turns[-1].role != USER_ROLE:
            raise ValueError("dialogue context must end with a user turn")

    @staticmethod
    def from_pairs(pairs: list[tuple[str, str]]) -> "DialogueContext":
        return DialogueContext(tuple(DialogueTurn(r, t) for r, t in pairs))

    def extended(self, turn: DialogueTurn) -> "DialogueContext":
        return DialogueContext(self.turns + (turn,))

    @property
    def last_user_text(self) -> str:
        return self.turns[-1].text


@dataclass(frozen=True)
class GroundedExample:
    """One supervised instance: a context, its relevant passages, and the
    gold grounding span / answer for the final user turn."""

    example_id: str
    context: DialogueContext
    positive_passage_ids: frozenset[str]
    gold_span: str = ""
    gold_answer: str = ""
    hard_negative_ids: frozenset[str] = frozenset()

    def __post_init__(self):
        if not self.positive_passage_ids:
            raise ValueError(
                f"example {self.example_id!r} has no positive passages"
            )


def validate_gold_spans(
    examples: list[GroundedExample], passages_by_id: dict[str, Passage]
) -> int:
    """Check each gold span is a substring of at least one positive passage.

    Violations are logged, not fatal (annotation noise in real corpora).
    Returns the number of violations found.
    """
    bad = 0
    for ex in examples:
        if not ex.gold_span:
            continue
        hit = any(
            ex.gold_span in passages_by_id[pid].text
            for pid in ex.positive_passage_ids
            if pid in passages_by_id
        )
        if not hit:
            bad += 1
            logger.warning(
                "example %s: gold span not found in any positive passage",
                ex.example_id,
            )
    return bad
