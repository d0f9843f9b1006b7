"""Prompt and target construction plus structured output parsing.

Every model input is one flat string: task prefix, then the rendered
history, then the top passages joined in rank order (early fusion). Targets
and outputs use the ⟨grounding⟩/⟨agent⟩ markers to carry the extracted span
and the answer through a single sequence-to-sequence channel.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..corpus import DialogueContext, serialize_history
from ..textproc import AGENT_MARK, GROUND_MARK


class TaskTemplate(enum.Enum):
    GROUND_THEN_AGENT = "ground_then_agent"
    GROUND_ONLY = "ground_only"
    AGENT_ONLY = "agent_only"


TASK_PREFIX = {
    TaskTemplate.GROUND_THEN_AGENT: f"generate {GROUND_MARK} then {AGENT_MARK}",
    TaskTemplate.GROUND_ONLY: f"generate {GROUND_MARK}",
    TaskTemplate.AGENT_ONLY: f"generate {AGENT_MARK}",
}


@dataclass(frozen=True)
class PromptExample:
    example_id: str
    task: TaskTemplate
    input_text: str
    target_text: str


@dataclass(frozen=True)
class GenerationOutput:
    raw: str
    parse_ok: bool
    span: str | None = None
    answer: str | None = None


def build_prompt(
    task: TaskTemplate,
    ctx: DialogueContext,
    passage_texts: list[str],
    max_history_tokens: int = 128,
    max_prompt_tokens: int = 256,
) -> str:
    """Compose "[task prefix] [history] [passages...]" within a whitespace
    token budget. Clipping priority: the prefix always survives, then recent
    history, then passages in rank order (the lowest-ranked passage is
    trimmed or dropped first)."""
    if not passage_texts:
        raise ValueError("at least one passage is required")
    if len(passage_texts) > 5:
        raise ValueError(f"at most 5 passages are fused, got {len(passage_texts)}")
    prefix = TASK_PREFIX[task]
    used = len(prefix.split())
    history_budget = min(max_history_tokens, max(1, max_prompt_tokens - used))
    history = serialize_history(ctx, history_budget)
    used += len(history.split())

    parts = [prefix, history]
    for text in passage_texts:
        room = max_prompt_tokens - used
        if room <= 0:
            break
        words = text.split()
        if len(words) > room:
            words = words[:room]
        parts.append(" ".join(words))
        used += len(words)
    return " ".join(parts)


def build_target(
    task: TaskTemplate, gold_span: str | None, gold_answer: str | None
) -> str:
    if task in (TaskTemplate.GROUND_THEN_AGENT, TaskTemplate.GROUND_ONLY):
        if not gold_span:
            raise ValueError(f"task {task.value} requires a gold span")
    if task in (TaskTemplate.GROUND_THEN_AGENT, TaskTemplate.AGENT_ONLY):
        if not gold_answer:
            raise ValueError(f"task {task.value} requires a gold answer")
    if task is TaskTemplate.GROUND_THEN_AGENT:
        return f"{GROUND_MARK} {gold_span} {AGENT_MARK} {gold_answer}"
    if task is TaskTemplate.GROUND_ONLY:
        return f"{GROUND_MARK} {gold_span}"
    return f"{AGENT_MARK} {gold_answer}"


def parse_output(raw: str, task: TaskTemplate) -> GenerationOutput:
    """Split a decoded string into (span, answer) by the markers.

    The span is the text strictly between the first ⟨grounding⟩ and the first
    subsequent ⟨agent⟩ (or the end); the answer follows the first ⟨agent⟩.
    When a marker the task requires is missing, parsing fails soft: the whole
    raw string lands in the task's primary field.
    """
    g = raw.find(GROUND_MARK)
    a = raw.find(AGENT_MARK, g + len(GROUND_MARK) if g >= 0 else 0)

    span = None
    if g >= 0:
        span_end = a if a >= 0 else len(raw)
        span = raw[g + len(GROUND_MARK) : span_end].strip()
    answer = raw[a + len(AGENT_MARK) :].strip() if a >= 0 else None

    if task is TaskTemplate.GROUND_THEN_AGENT:
        if g >= 0 and a >= 0:
            return GenerationOutput(raw, True, span=span, answer=answer)
        return GenerationOutput(raw, False, answer=raw.strip())
    if task is TaskTemplate.GROUND_ONLY:
        if g >= 0:
            return GenerationOutput(raw, True, span=span)
        return GenerationOutput(raw, False, span=raw.strip())
    if a >= 0:
        return GenerationOutput(raw, True, answer=answer)
    return GenerationOutput(raw, False, answer=raw.strip())
