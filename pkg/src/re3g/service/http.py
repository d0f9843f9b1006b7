"""JSON-over-HTTP serving surface.

Endpoints:
  POST /sessions                  -> {"session_id"}
  POST /sessions/{id}/turns       {"text", "overrides"?} -> TurnRecord JSON
  GET  /sessions/{id}             -> full session
  GET  /passages/{id}             -> passage with offsets
  GET  /health                    -> build + snapshot info
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .. import __version__
from .pipeline import Pipeline, SessionStore


class TurnRequest(BaseModel):
    text: str
    overrides: dict | None = None

    model_config = {"extra": "forbid"}


ALLOWED_OVERRIDES = {"use_reranker", "use_refinement", "task", "greedy"}


def create_app(pipeline: Pipeline, store: SessionStore | None = None) -> FastAPI:
    app = FastAPI(title="re3g", version=__version__)
    sessions = store or SessionStore()

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    @app.post("/sessions")
    def start_session():
        session = sessions.create()
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnRequest):
        try:
            session = sessions.get(session_id)
        except KeyError:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})
        if not body.text.strip():
            return JSONResponse(status_code=400, content={"detail": "empty turn text"})
        overrides = body.overrides or {}
        bad = set(overrides) - ALLOWED_OVERRIDES
        if bad:
            return JSONResponse(
                status_code=400,
                content={"detail": f"overrides not allowed: {sorted(bad)}"},
            )
        try:
            record = pipeline.answer_turn(session, body.text, overrides=overrides)
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"detail": str(exc)})
        sessions.record_turn(session, record)
        return record.to_dict()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return sessions.get(session_id).to_dict()
        except KeyError:
            return JSONResponse(status_code=404, content={"detail": "unknown session"})

    @app.get("/passages/{passage_id}")
    def get_passage(passage_id: str):
        passage = pipeline.passages_by_id.get(passage_id)
        if passage is None:
            return JSONResponse(status_code=404, content={"detail": "unknown passage"})
        return {
            "passage_id": passage.passage_id,
            "doc_id": passage.doc_id,
            "title": passage.title,
            "text": passage.text,
            "char_start": passage.char_start,
            "char_end": passage.char_end,
        }

    @app.get("/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "passages": len(pipeline.passages),
            "snapshot_version": pipeline.index.snapshot_version,
            "reranker_loaded": pipeline.reranker is not None,
        }

    return app
