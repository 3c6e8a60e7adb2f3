"""HTTP session service around the recommendation engine.

Endpoints::

    POST /sessions                  -> 201 {"session_id": "..."}
    POST /sessions/{id}/turns       -> TurnResult for one seeker utterance
    GET  /sessions/{id}/transcript  -> {"turns": [...], "rendered": "..."}

Errors come back as ``{"error": "..."}`` with 404 for unknown sessions, 422
for unusable input and 503 while no model is loaded. Sessions are isolated;
turns within one session are appended under a per-session lock, so
concurrent posts serialize to some order with nothing lost. Every turn is
appended to a per-session JSONL log before the response goes out, and a
fresh process pointed at the same data directory rebuilds all sessions from
those logs.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .conversation import RECOMMENDER, SEEKER, DialogHistory, DialogTurn
from .kg import Mention, link_mentions
from .pipeline import Pipeline

logger = logging.getLogger(__name__)


class TurnRequest(BaseModel):
    text: str


class Session:
    """In-memory state of one conversation plus its append-only log file."""

    def __init__(self, session_id: str, log_path: Path):
        self.id = session_id
        self.log_path = log_path
        self.turns: list[DialogTurn] = []
        self.explanations: dict[int, dict] = {}
        self.exchanges = 0
        self.lock = threading.Lock()

    def append(self, turn: DialogTurn, explanation: dict | None, exchange: int) -> None:
        record = {
            "turn_index": turn.turn_index,
            "speaker": turn.speaker,
            "text": turn.text,
            "mentions": [[m.start, m.end, m.surface, m.entity] for m in turn.mentions],
            "explanation": explanation,
            "exchange": exchange,
        }
        with self.log_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        self.turns.append(turn)
        if explanation is not None:
            self.explanations[turn.turn_index] = explanation
        self.exchanges = max(self.exchanges, exchange)

    def transcript(self) -> dict:
        turns = [
            {"turn_index": t.turn_index, "speaker": t.speaker, "text": t.text}
            for t in self.turns
        ]
        lines = []
        for t in self.turns:
            if t.speaker == RECOMMENDER:
                explanation = self.explanations.get(t.turn_index)
                suffix = f" ({explanation['text']})" if explanation else ""
                lines.append(f"AGENT: {t.text}{suffix}")
            else:
                lines.append(f"SEEKER: {t.text}")
        return {"turns": turns, "rendered": "\n".join(lines)}


class SessionStore:
    """All sessions of one service instance, recoverable from disk."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._recover()

    def _recover(self) -> None:
        for log_path in sorted(self.root.glob("*.jsonl")):
            session = Session(log_path.stem, log_path)
            try:
                with log_path.open("r", encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if not line:
                            continue
                        record = json.loads(line)
                        mentions = tuple(
                            Mention(start=m[0], end=m[1], surface=m[2], entity=m[3])
                            for m in record.get("mentions", [])
                        )
                        turn = DialogTurn(
                            turn_index=record["turn_index"],
                            speaker=record["speaker"],
                            text=record["text"],
                            mentions=mentions,
                        )
                        session.turns.append(turn)
                        if record.get("explanation") is not None:
                            session.explanations[turn.turn_index] = record["explanation"]
                        session.exchanges = max(session.exchanges, record.get("exchange", 0))
            except (json.JSONDecodeError, KeyError, ValueError, IndexError) as exc:
                logger.warning("skipping unreadable session log %s (%s)", log_path, exc)
                continue
            self._sessions[session.id] = session

    def create(self) -> Session:
        session_id = uuid.uuid4().hex
        session = Session(session_id, self.root / f"{session_id}.jsonl")
        session.log_path.touch()
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            return self._sessions.get(session_id)


def create_app(engine: Pipeline | None, data_dir: str | Path) -> FastAPI:
    """Build the service application around an engine (or none yet)."""
    app = FastAPI(title="egcr service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    store = SessionStore(data_dir)
    app.state.engine = engine
    app.state.store = store

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={"error": "invalid request body"})

    @app.exception_handler(StarletteHTTPException)
    async def on_http_error(request: Request, exc: StarletteHTTPException):
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    @app.post("/sessions", status_code=201)
    def create_session() -> dict:
        session = store.create()
        return {"session_id": session.id}

    @app.post("/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnRequest) -> JSONResponse:
        session = store.get(session_id)
        if session is None:
            return JSONResponse(status_code=404, content={"error": f"no session {session_id}"})
        if app.state.engine is None:
            return JSONResponse(status_code=503, content={"error": "model not loaded"})
        text = body.text.strip()
        if not text:
            return JSONResponse(
                status_code=422, content={"error": "turn text must be non-empty"}
            )
        engine: Pipeline = app.state.engine
        with session.lock:
            seeker_turn = DialogTurn(
                turn_index=len(session.turns) + 1,
                speaker=SEEKER,
                text=text,
                mentions=tuple(link_mentions(text, engine.g)),
            )
            history = DialogHistory(turns=tuple(session.turns) + (seeker_turn,))
            outcome = engine.respond(history)
            exchange = session.exchanges + 1
            session.append(seeker_turn, None, exchange)
            agent_turn = DialogTurn(
                turn_index=len(session.turns) + 1,
                speaker=RECOMMENDER,
                text=outcome.utterance,
                mentions=tuple(link_mentions(outcome.utterance, engine.g)),
            )
            explanation = {
                "text": outcome.explanation.text,
                "source": outcome.explanation.source,
            }
            session.append(agent_turn, explanation, exchange)
            payload = {
                "response_text": outcome.response_text,
                "explanation": explanation,
                "recommendations": [
                    {
                        "entity_id": r.entity_id,
                        "name": r.name,
                        "score": r.score,
                        "path": list(r.path),
                    }
                    for r in outcome.ranked
                ],
                "turn_index": exchange,
            }
        return JSONResponse(status_code=200, content=payload)

    @app.get("/sessions/{session_id}/transcript")
    def get_transcript(session_id: str) -> JSONResponse:
        session = store.get(session_id)
        if session is None:
            return JSONResponse(status_code=404, content={"error": f"no session {session_id}"})
        with session.lock:
            return JSONResponse(status_code=200, content=session.transcript())

    return app


def serve(model_dir: str | Path, data_dir: str | Path, host: str, port: int) -> None:
    """Load a model directory and run the service under uvicorn."""
    import uvicorn

    engine = Pipeline.load(model_dir)
    app = create_app(engine, data_dir)
    uvicorn.run(app, host=host, port=port)
