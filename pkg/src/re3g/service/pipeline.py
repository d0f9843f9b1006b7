"""The serving pipeline: retrieve, rerank, refine + generate, one turn at a
time, with per-session append-only records.

A TurnRecord carries everything the UI and the replay harness need: the
final candidate list with both scores, the parsed span and its offsets into
a listed candidate, stage timings, and the exact config snapshot used.
"""

from __future__ import annotations

import json
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..corpus import (
    DialogueContext,
    DialogueTurn,
    Passage,
    find_span_offsets,
    serialize_history,
)
from ..generation import GeneratorModel, TaskTemplate
from ..reranker.model import CrossEncoder, RerankCandidate, rerank
from ..retriever import BiEncoder, DenseIndex
from .config import PipelineConfig


@dataclass(frozen=True)
class TurnRecord:
    turn_index: int
    user_text: str
    answer: str
    span: str | None
    parse_ok: bool
    span_offsets: dict | None
    candidates: list[dict]
    timings: dict[str, float]
    config: dict
    snapshot_version: int

    def to_dict(self) -> dict:
        return asdict(self)

    def replay_payload(self) -> str:
        """Canonical serialization for determinism comparisons: everything
        except the wall-clock stage timings."""
        data = self.to_dict()
        data.pop("timings")
        return json.dumps(data, sort_keys=True)


@dataclass
class Session:
    session_id: str
    turns: list[DialogueTurn] = field(default_factory=list)
    records: list[TurnRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "turns": [{"role": t.role, "text": t.text} for t in self.turns],
            "records": [r.to_dict() for r in self.records],
        }


def _candidate_dict(c: RerankCandidate) -> dict:
    return {
        "passage_id": c.passage_id,
        "retriever_rank": c.retriever_rank,
        "retriever_score": c.retriever_score,
        "reranker_score": c.reranker_score,
        "final_rank": c.final_rank,
    }


class Pipeline:
    def __init__(
        self,
        passages: list[Passage],
        retriever: BiEncoder,
        index: DenseIndex,
        generator: GeneratorModel,
        config: PipelineConfig,
        reranker: CrossEncoder | None = None,
    ):
        if not passages:
            raise ValueError("pipeline requires a non-empty passage corpus")
        if config.use_reranker and reranker is None:
            raise ValueError("use_reranker=true but no reranker checkpoint loaded")
        self.passages = passages
        self.passages_by_id = {p.passage_id: p for p in passages}
        self.retriever = retriever
        self.index = index
        self.generator = generator
        self.reranker = reranker
        self.config = config

    def _task_for(self, config: PipelineConfig) -> TaskTemplate:
        if not config.use_refinement:
            return TaskTemplate.AGENT_ONLY
        return TaskTemplate(config.task)

    def run_stages(self, ctx: DialogueContext, config: PipelineConfig) -> dict:
        """Retrieve, optionally rerank, generate, and locate the span for one
        context. Returns candidates, retrieval tail, parsed output, offsets,
        and stage timings."""
        if config.use_reranker and self.reranker is None:
            raise ValueError("reranker requested but not loaded")
        query = serialize_history(ctx, config.history_max_tokens)
        timings: dict[str, float] = {}

        t0 = time.perf_counter()
        results = self.index.search(
            self.retriever.encode_context(query),
            min(config.k_retrieve, len(self.index)),
        )
        timings["retrieve_s"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        if config.use_reranker:
            ranked = rerank(
                self.reranker, query, results, self.passages_by_id,
                top_n=config.k_rerank_out,
            )
        else:
            ranked = [
                RerankCandidate(
                    passage_id=r.passage_id,
                    retriever_rank=r.rank,
                    retriever_score=r.retriever_score,
                    reranker_score=None,
                    final_rank=r.rank,
                )
                for r in results[: config.k_rerank_out]
            ]
        timings["rerank_s"] = time.perf_counter() - t0

        task = self._task_for(config)
        t0 = time.perf_counter()
        output = self.generator.generate(
            ctx,
            [self.passages_by_id[c.passage_id].text for c in ranked],
            task,
            greedy=config.greedy,
        )
        timings["generate_s"] = time.perf_counter() - t0

        span_offsets = None
        if output.span:
            for c in ranked:
                hit = find_span_offsets(self.passages_by_id[c.passage_id], output.span)
                if hit is not None:
                    span_offsets = {
                        "passage_id": c.passage_id,
                        "start": hit[0],
                        "end": hit[1],
                    }
                    break

        shortlist_ids = {c.passage_id for c in ranked}
        ranked_ids = [c.passage_id for c in ranked] + [
            r.passage_id for r in results if r.passage_id not in shortlist_ids
        ]
        return {
            "candidates": ranked,
            "ranked_ids": ranked_ids,
            "output": output,
            "span_offsets": span_offsets,
            "timings": timings,
        }

    def predict_example(self, ctx: DialogueContext, example_id: str,
                        overrides: dict | None = None) -> dict:
        """One prediction record in the predictions.jsonl schema."""
        config = self.config.with_overrides(**overrides) if overrides else self.config
        stages = self.run_stages(ctx, config)
        output = stages["output"]
        return {
            "example_id": example_id,
            "answer": output.answer or "",
            "span": output.span or "",
            "ranked_passage_ids": stages["ranked_ids"],
        }

    def answer_turn(
        self, session: Session, user_text: str, overrides: dict | None = None
    ) -> TurnRecord:
        config = self.config.with_overrides(**overrides) if overrides else self.config
        t_start = time.perf_counter()
        session.turns.append(DialogueTurn("user", user_text))
        ctx = DialogueContext(tuple(session.turns))
        stages = self.run_stages(ctx, config)
        output = stages["output"]

        answer = output.answer or output.span or output.raw or "(no output)"
        session.turns.append(DialogueTurn("agent", answer))
        timings = stages["timings"]
        timings["total_s"] = time.perf_counter() - t_start

        record = TurnRecord(
            turn_index=len(session.records),
            user_text=user_text,
            answer=answer,
            span=output.span,
            parse_ok=output.parse_ok,
            span_offsets=stages["span_offsets"],
            candidates=[_candidate_dict(c) for c in stages["candidates"]],
            timings=timings,
            config=config.to_dict(),
            snapshot_version=self.index.snapshot_version,
        )
        session.records.append(record)
        return record


class SessionStore:
    """In-memory sessions with JSONL event logs under the run directory."""

    def __init__(self, directory: str | Path | None = None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}

    def create(self) -> Session:
        session = Session(session_id=uuid.uuid4().hex[:16])
        self._sessions[session.session_id] = session
        self._append(session.session_id, {"type": "start", "session_id": session.session_id})
        return session

    def get(self, session_id: str) -> Session:
        if session_id not in self._sessions:
            raise KeyError(f"unknown session {session_id!r}")
        return self._sessions[session_id]

    def record_turn(self, session: Session, record: TurnRecord) -> None:
        self._append(session.session_id, {"type": "turn", "record": record.to_dict()})

    def _append(self, session_id: str, event: dict) -> None:
        if self.directory is None:
            return
        path = self.directory / f"{session_id}.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, ensure_ascii=False) + "\n")
