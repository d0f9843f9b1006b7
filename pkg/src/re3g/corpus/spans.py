"""Locating grounding spans inside passages (for highlighting and metrics)."""

from __future__ import annotations

from .types import Passage


def _normalize_with_map(text: str) -> tuple[str, list[int]]:
    """Collapse whitespace runs to single spaces, keeping a map from each
    normalized character back to its raw offset."""
    out: list[str] = []
    offsets: list[int] = []
    in_space = True  # swallow leading whitespace
    for i, ch in enumerate(text):
        if ch.isspace():
            if not in_space:
                out.append(" ")
                offsets.append(i)
                in_space = True
        else:
            out.append(ch)
            offsets.append(i)
            in_space = False
    if out and out[-1] == " ":
        out.pop()
        offsets.pop()
    return "".join(out), offsets


def find_span_offsets(passage: Passage, span: str) -> tuple[int, int] | None:
    """Locate ``span`` in the passage text, returning char offsets or None.

    Tries an exact substring match first, then a whitespace-normalized match
    mapped back to raw offsets.
    """
    if not span:
        raise ValueError("span must be non-empty")
    text = passage.text

    pos = text.find(span)
    if pos >= 0:
        return pos, pos + len(span)

    norm_text, offsets = _normalize_with_map(text)
    norm_span, _ = _normalize_with_map(span)
    if not norm_span:
        return None
    pos = norm_text.find(norm_span)
    if pos < 0:
        return None
    start = offsets[pos]
    end = offsets[pos + len(norm_span) - 1] + 1
    return start, end
