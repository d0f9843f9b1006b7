"""JSONL ingestion and emission for documents, dialogues, and passages.

File schemas:
  documents.jsonl  {"doc_id", "title", "body", "meta"}
  dialogues.jsonl  {"dial_id", "turns": [{"role", "text"}],
                    "grounding": [{"turn_index", "positive_passage_ids",
                                   "span", "answer"}]}
  passages.jsonl   {"passage_id", "doc_id", "title", "text",
                    "char_start", "char_end"}
"""

from __future__ import annotations

import json
from pathlib import Path

from .types import DialogueContext, DialogueTurn, Document, GroundedExample, Passage


class IngestError(ValueError):
    """Raised for malformed or inconsistent input files."""


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc


def ingest_documents(path: str | Path) -> list[Document]:
    """Load documents from a JSONL file or a directory of JSONL files.

    Duplicate doc_ids and malformed records are errors (with line numbers).
    """
    path = Path(path)
    files = sorted(path.glob("*.jsonl")) if path.is_dir() else [path]
    docs: list[Document] = []
    seen: dict[str, str] = {}
    for file in files:
        for lineno, rec in _iter_jsonl(file):
            try:
                doc = Document(
                    doc_id=rec["doc_id"],
                    title=rec.get("title", ""),
                    body=rec["body"],
                    source_meta=dict(rec.get("meta", {})),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{file}:{lineno}: bad document record: {exc}") from exc
            if doc.doc_id in seen:
                raise IngestError(
                    f"{file}:{lineno}: duplicate doc_id {doc.doc_id!r} "
                    f"(first seen at {seen[doc.doc_id]})"
                )
            seen[doc.doc_id] = f"{file}:{lineno}"
            docs.append(doc)
    return docs


def ingest_dialogues(path: str | Path) -> list[GroundedExample]:
    """Load dialogues and expand each grounded user turn into a GroundedExample.

    The example context is the dialogue prefix ending at the grounded turn.
    """
    examples: list[GroundedExample] = []
    for lineno, rec in _iter_jsonl(Path(path)):
        try:
            dial_id = rec["dial_id"]
            turns = [DialogueTurn(t["role"], t["text"]) for t in rec["turns"]]
            for g in rec.get("grounding", []):
                ti = g["turn_index"]
                if not (0 <= ti < len(turns)):
                    raise ValueError(f"turn_index {ti} out of range")
                if turns[ti].role != "user":
                    raise ValueError(f"turn_index {ti} is not a user turn")
                ctx = DialogueContext(tuple(turns[: ti + 1]))
                examples.append(
                    GroundedExample(
                        example_id=f"{dial_id}:{ti}",
                        context=ctx,
                        positive_passage_ids=frozenset(g["positive_passage_ids"]),
                        gold_span=g.get("span", ""),
                        gold_answer=g.get("answer", ""),
                        hard_negative_ids=frozenset(g.get("hard_negative_ids", [])),
                    )
                )
        except IngestError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"{path}:{lineno}: bad dialogue record: {exc}") from exc
    return examples


def write_passages(passages: list[Passage], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in passages:
            fh.write(
                json.dumps(
                    {
                        "passage_id": p.passage_id,
                        "doc_id": p.doc_id,
                        "title": p.title,
                        "text": p.text,
                        "char_start": p.char_start,
                        "char_end": p.char_end,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_passages(path: str | Path) -> list[Passage]:
    passages = []
    for lineno, rec in _iter_jsonl(Path(path)):
        try:
            passages.append(
                Passage(
                    passage_id=rec["passage_id"],
                    doc_id=rec["doc_id"],
                    title=rec.get("title", ""),
                    text=rec["text"],
                    char_start=rec["char_start"],
                    char_end=rec["char_end"],
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"{path}:{lineno}: bad passage record: {exc}") from exc
    return passages
