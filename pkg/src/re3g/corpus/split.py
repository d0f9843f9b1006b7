"""Document-to-passage splitting policies.

Two policies:
  window(W, S)  sliding window of W whitespace tokens advancing by stride S;
                a window starts at every stride position below the token count,
                so short tail windows are kept and the spans cover the body.
  structural    one passage per section, where sections open at markdown-style
                header lines (`# ...` through `###### ...`); preamble text
                before the first header becomes its own passage.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .types import Document, Passage

_WS_TOKEN = re.compile(r"\S+")
_HEADER_LINE = re.compile(r"^[ \t]{0,3}#{1,6}[ \t]+\S", re.MULTILINE)


@dataclass(frozen=True)
class WindowPolicy:
    width: int = 200
    stride: int = 100

    def __post_init__(self):
        if not (self.width > self.stride > 0):
            raise ValueError(
                f"window policy requires W > S > 0, got W={self.width} S={self.stride}"
            )


@dataclass(frozen=True)
class StructuralPolicy:
    pass


SplitPolicy = WindowPolicy | StructuralPolicy


def _passage_id(doc_id: str, idx: int) -> str:
    return f"{doc_id}:p{idx:03d}"  # URL-safe: ids appear in API paths


def _make(doc: Document, idx: int, start: int, end: int) -> Passage:
    return Passage(
        passage_id=_passage_id(doc.doc_id, idx),
        doc_id=doc.doc_id,
        text=doc.body[start:end],
        char_start=start,
        char_end=end,
        title=doc.title,
    )


def _window_split(doc: Document, policy: WindowPolicy) -> list[Passage]:
    body = doc.body
    spans = [m.span() for m in _WS_TOKEN.finditer(body)]
    n = len(spans)
    if n <= policy.width:
        # whole body fits one window (including the zero-token degenerate case)
        return [_make(doc, 0, 0, len(body))]

    starts = list(range(0, n, policy.stride))
    passages = []
    for i, tok_start in enumerate(starts):
        tok_end = min(tok_start + policy.width, n)
        # stretch the first span back to 0 and the last forward to len(body)
        # so the union of char spans covers the body exactly
        char_start = 0 if i == 0 else spans[tok_start][0]
        char_end = len(body) if i == len(starts) - 1 else spans[tok_end - 1][1]
        passages.append(_make(doc, i, char_start, char_end))
    return passages


def _structural_split(doc: Document) -> list[Passage]:
    body = doc.body
    header_starts = [m.start() for m in _HEADER_LINE.finditer(body)]
    if not header_starts:
        return [_make(doc, 0, 0, len(body))]

    bounds = []
    if body[: header_starts[0]].strip():
        bounds.append(0)
    bounds.extend(header_starts)
    passages = []
    for i, start in enumerate(bounds):
        end = bounds[i + 1] if i + 1 < len(bounds) else len(body)
        passages.append(_make(doc, i, start, end))
    return passages


def split_passages(doc: Document, policy: SplitPolicy) -> list[Passage]:
    """Split one document into passages under the given policy.

    Passages follow document order, their char spans cover the body, and
    each passage's text equals the exact body slice.
    """
    if isinstance(policy, WindowPolicy):
        return _window_split(doc, policy)
    if isinstance(policy, StructuralPolicy):
        return _structural_split(doc)
    raise TypeError(f"unknown split policy: {policy!r}")


def split_corpus(docs: list[Document], policy: SplitPolicy) -> list[Passage]:
    out: list[Passage] = []
    for doc in docs:
        out.extend(split_passages(doc, policy))
    return out
