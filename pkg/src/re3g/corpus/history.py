"""Rendering of dialogue contexts into the flat history string.

Turns render oldest to newest as "⟨user⟩ text" / "⟨agent⟩ text" joined by
single spaces. Over budget, whole oldest exchanges are dropped first (the kept
history never opens with a dangling agent reply); as a last resort the final
user turn is truncated from its left. The final user turn is never dropped.
"""

from __future__ import annotations

from .types import DialogueContext, DialogueTurn, USER_ROLE

USER_MARK = "⟨user⟩"
AGENT_MARK = "⟨agent⟩"

_ROLE_MARK = {USER_ROLE: USER_MARK, "agent": AGENT_MARK}


def render_turn(turn: DialogueTurn) -> str:
    return f"{_ROLE_MARK[turn.role]} {turn.text}"


def _render(turns) -> str:
    return " ".join(render_turn(t) for t in turns)


def _token_count(s: str) -> int:
    return len(s.split())


def serialize_history(ctx: DialogueContext, max_tokens: int) -> str:
    """Render a context within a whitespace-token budget.

    Candidate renderings are the full history plus every suffix that starts
    at a user turn; the longest candidate that fits wins. If even the final
    user turn alone overflows, its text loses tokens from the left (the role
    marker and the last text token always survive).
    """
    if max_tokens <= 0:
        raise ValueError(f"max_tokens must be positive, got {max_tokens}")

    turns = ctx.turns
    starts = [0] + [
        i for i in range(1, len(turns)) if turns[i].role == USER_ROLE
    ]
    for j in starts:
        rendered = _render(turns[j:])
        if _token_count(rendered) <= max_tokens:
            return rendered

    # nothing fits whole: truncate the last user turn from its left
    last = turns[-1]
    words = last.text.split()
    keep = max(1, max_tokens - 1)  # marker costs one token
    return f"{_ROLE_MARK[last.role]} " + " ".join(words[-keep:])
