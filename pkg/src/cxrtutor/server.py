"""HTTP service: session lifecycle, turn submission, case browsing.

The API is stateless above the engine — sessions hydrate from their event
logs on demand, so a restart preserves every GET. Turn submission runs the
synchronous pipeline under a per-session lock; a concurrent submission gets
409 and a turn that outlives the configured timeout gets 504 while the
event log stays consistent.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from pathlib import Path

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .domain import BoundingBox, Fixation, StudentTurn
from .errors import (
    CxrTutorError,
    InvariantViolation,
    OutOfBoundsFixation,
    SessionCompleted,
    TurnIndexMismatch,
    UnknownCase,
)
from .orchestrator import Engine, SessionState
from .sanitizer import detect_leaks, sanitize_case, student_uttered_terms
from .serialize import tutor_response_to_dict, student_turn_to_dict


class BoxIn(BaseModel):
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    label: str | None = None


class FixationIn(BaseModel):
    x: float
    y: float
    duration: float
    order_index: int


class TurnIn(BaseModel):
    boxes: list[BoxIn] = Field(default_factory=list)
    fixations: list[FixationIn] = Field(default_factory=list)
    text: str = ""
    confidence: float = 0.5
    requests: list[str] = Field(default_factory=list)


class SessionCreate(BaseModel):
    case_id: str


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"code": code, "message": message, "http_status": status},
    )


def _case_summary_payload(engine: Engine, case_id: str) -> dict:
    case = engine.library[case_id]
    summary = sanitize_case(case, engine.categories)
    return {
        "case_id": case.case_id,
        "image_width": case.image_width,
        "image_height": case.image_height,
        "categories": list(summary.categories),
        "finding_count": summary.finding_count,
        "anatomy_hints": list(summary.anatomy_hints),
        "skills": list(case.skills),
        "region_names": list(case.effective_mask().region_names),
    }


_PROSE_FIELDS = ("message", "reasoning_text")


def _assert_no_leaks(engine: Engine, session: SessionState, payload: dict):
    """Test-build middleware: prose fields of a response body must pass the
    leak detector for the session's case."""
    case = engine.library[session.case_id]
    uttered = frozenset(student_uttered_terms(session.student_texts()))
    prose: list[str] = []
    for field_name in _PROSE_FIELDS:
        value = payload.get(field_name)
        if isinstance(value, str):
            prose.append(value)
    if payload.get("socratic"):
        prose.extend(payload["socratic"].get("prompts", []))
    for snippet in payload.get("knowledge", []):
        prose.append(snippet.get("text", ""))
    if payload.get("assessment"):
        prose.append(payload["assessment"].get("impression", ""))
    for text in prose:
        report = detect_leaks(text, case, uttered, engine.categories)
        if not report.clean:
            raise RuntimeError(f"response leaked: {report.leaks!r}")


def _parse_turn(body: TurnIn, turn_index: int) -> StudentTurn:
    boxes = []
    for i, box in enumerate(body.boxes):
        try:
            boxes.append(
                BoundingBox(
                    x_min=box.x_min,
                    y_min=box.y_min,
                    x_max=box.x_max,
                    y_max=box.y_max,
                    label=box.label,
                )
            )
        except InvariantViolation as exc:
            raise SchemaViolation(f"boxes[{i}]: {exc}") from exc
    fixations = []
    for i, fix in enumerate(body.fixations):
        try:
            fixations.append(
                Fixation(
                    x=fix.x, y=fix.y, duration=fix.duration, order_index=fix.order_index
                )
            )
        except InvariantViolation as exc:
            raise SchemaViolation(f"fixations[{i}]: {exc}") from exc
    try:
        return StudentTurn(
            boxes=tuple(boxes),
            fixations=tuple(fixations),
            text=body.text,
            confidence=body.confidence,
            requests=frozenset(body.requests),
            turn_index=turn_index,
        )
    except InvariantViolation as exc:
        raise SchemaViolation(str(exc)) from exc


class SchemaViolation(CxrTutorError):
    pass


class UnknownSession(CxrTutorError):
    pass


def create_app(engine: Engine, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cxrtutor", docs_url=None, redoc_url=None)
    sessions: dict[str, SessionState] = {}
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()
    executor = ThreadPoolExecutor(max_workers=8)

    def session_lock(session_id: str) -> threading.Lock:
        with registry_lock:
            if session_id not in locks:
                locks[session_id] = threading.Lock()
            return locks[session_id]

    def get_session(session_id: str) -> SessionState:
        if session_id in sessions:
            return sessions[session_id]
        try:
            session = engine.load_session(session_id)
        except (UnknownCase, CxrTutorError) as exc:
            raise UnknownSession(session_id) from exc
        sessions[session_id] = session
        return session

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        loc = ".".join(str(p) for p in first.get("loc", []) if p != "body")
        return _error(422, "schema_violation", f"{loc}: {first.get('msg', 'invalid')}")

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreate):
        try:
            session = engine.create_session(body.case_id)
        except UnknownCase:
            return _error(404, "unknown_case", f"no case {body.case_id!r}")
        sessions[session.session_id] = session
        return {
            "session_id": session.session_id,
            "case": _case_summary_payload(engine, session.case_id),
        }

    @app.post("/sessions/{session_id}/turns")
    def submit_turn(session_id: str, body: TurnIn):
        try:
            session = get_session(session_id)
        except UnknownSession:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        if session.completed:
            return _error(409, "session_completed", "case already completed")
        try:
            turn = _parse_turn(body, turn_index=session.turn_count)
        except SchemaViolation as exc:
            return _error(422, "schema_violation", str(exc))

        lock = session_lock(session_id)
        if not lock.acquire(blocking=False):
            return _error(409, "turn_in_flight", "a turn is already being processed")

        def run_turn():
            try:
                return engine.process_turn(session, turn)
            finally:
                lock.release()

        future = executor.submit(run_turn)
        try:
            _, response = future.result(timeout=engine.config.server_turn_timeout_s)
        except FutureTimeoutError:
            return _error(504, "turn_timeout", "turn exceeded the server time budget")
        except SessionCompleted:
            return _error(409, "session_completed", "case already completed")
        except TurnIndexMismatch as exc:
            return _error(409, "turn_in_flight", str(exc))
        except (InvariantViolation, OutOfBoundsFixation) as exc:
            return _error(422, "schema_violation", str(exc))

        payload = tutor_response_to_dict(response)
        payload["turn_index"] = turn.turn_index
        if engine.config.server_leak_checks:
            _assert_no_leaks(engine, session, payload)
        return payload

    @app.get("/sessions/{session_id}")
    def session_view(session_id: str):
        try:
            session = get_session(session_id)
        except UnknownSession:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        from .bkt import mastery_overview

        return {
            "session_id": session.session_id,
            "case_id": session.case_id,
            "case": _case_summary_payload(engine, session.case_id),
            "turn_count": session.turn_count,
            "completed": session.completed,
            "resolved_findings": sorted(session.resolved_findings),
            "history": [
                {
                    "student_turn": student_turn_to_dict(turn),
                    "tutor_response": tutor_response_to_dict(response),
                }
                for turn, response in session.history
            ],
            "mastery": {
                skill: {"mastery": m, "attempts": a}
                for skill, (m, a) in mastery_overview(session.skills).items()
            },
        }

    @app.get("/sessions/{session_id}/mastery")
    def session_mastery(session_id: str):
        try:
            session = get_session(session_id)
        except UnknownSession:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        from .bkt import mastery_overview

        return {
            skill: {"mastery": m, "attempts": a}
            for skill, (m, a) in mastery_overview(session.skills).items()
        }

    @app.get("/sessions/{session_id}/similar")
    def session_similar(session_id: str):
        try:
            session = get_session(session_id)
        except UnknownSession:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        for _, response in reversed(session.history):
            if response.similar_cases:
                return [
                    {
                        "case_id": c.case_id,
                        "score": c.score,
                        "shared_labels": list(c.shared_labels),
                        "overlay_path": c.overlay_path,
                    }
                    for c in response.similar_cases
                ]
        return []

    @app.get("/cases")
    def list_cases():
        return [
            {
                "case_id": case.case_id,
                "image_width": case.image_width,
                "image_height": case.image_height,
            }
            for case in sorted(engine.library.values(), key=lambda c: c.case_id)
        ]

    @app.get("/cases/{case_id}/image")
    def case_image(case_id: str):
        if case_id not in engine.library:
            return _error(404, "unknown_case", f"no case {case_id!r}")
        path = Path(engine.library[case_id].image_path)
        return FileResponse(path, media_type="image/png")

    @app.get("/overlays/{name}")
    def overlay(name: str):
        if "/" in name or ".." in name:
            return _error(404, "unknown_resource", "bad overlay name")
        path = Path(engine.config.overlays_dir) / name
        if not path.exists():
            return _error(404, "unknown_resource", f"no overlay {name!r}")
        return FileResponse(path, media_type="image/png")

    if static_dir is not None and Path(static_dir).exists():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
