"""HTTP gateway: sessions, events, menus, assets, metrics, live state stream.

Endpoints (all JSON unless noted):

    POST /v1/sessions                    create; body {"language": "en"}
    GET  /v1/sessions/{id}               session snapshot
    POST /v1/sessions/{id}/events        wake|stop|transcript|capture|lasso|
                                         selection|new_request
    GET  /v1/sessions/{id}/menus         the three offer menus
    GET  /v1/sessions/{id}/stream        server-sent events, one per state change
    GET  /v1/assets/{id}?format=binary   compact-binary (default) or text OBJ
    GET  /v1/metrics/report              aggregated pipeline report

Event posts are idempotent per client_event_id: resubmitting the same id
returns the recorded outcome instead of reprocessing. Errors are JSON
objects {"error": {"code", "message"}} with stable codes. A shared-secret
bearer token can be required; the deployment story is single-operator and
local, so there is no multi-tenant auth.
"""

from __future__ import annotations

import asyncio
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .backends import BackendError
from .meshio import BINARY_EXTENSION, write_mesh
from .pipeline import Backends, Pipeline, PipelineConfig, report_metrics
from .repository import AssetRepository
from .session import Session, SessionState, TransitionError

__all__ = ["ApiConfig", "GatewayState", "create_app"]


@dataclass
class ApiConfig:
    bind: str = "127.0.0.1:8775"
    repo_path: str = "./repo"
    simplify_target: int = 1000
    auth_token: str | None = None
    console_dir: str | None = None

    def __post_init__(self):
        if self.simplify_target < 4:
            raise ValueError("simplify target must be >= 4")


def _error(code: str, message: str, status: int) -> JSONResponse:
    return JSONResponse({"error": {"code": code, "message": message}}, status_code=status)


class GatewayState:
    """Sessions, per-session ordering locks, and SSE subscribers."""

    def __init__(self, pipeline: Pipeline):
        self.pipeline = pipeline
        self.sessions: dict[str, Session] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.processed_events: dict[str, dict[str, dict]] = {}
        # session id -> [(asyncio queue, owning loop)]
        self.subscribers: dict[str, list[tuple[asyncio.Queue, asyncio.AbstractEventLoop]]] = {}
        self._registry_lock = threading.Lock()

    def create_session(self, language: str) -> Session:
        s = self.pipeline.new_session(language)
        with self._registry_lock:
            self.sessions[s.id] = s
            self.locks[s.id] = threading.Lock()
            self.processed_events[s.id] = {}
            self.subscribers[s.id] = []
        self.publish(s)
        return s

    def get(self, session_id: str) -> Session | None:
        return self.sessions.get(session_id)

    def subscribe(self, session_id: str, queue: asyncio.Queue, loop):
        with self._registry_lock:
            self.subscribers.setdefault(session_id, []).append((queue, loop))

    def unsubscribe(self, session_id: str, queue: asyncio.Queue):
        with self._registry_lock:
            subs = self.subscribers.get(session_id, [])
            self.subscribers[session_id] = [(q, l) for q, l in subs if q is not queue]

    def publish(self, session: Session, state_value: str | None = None):
        msg = {
            "session_id": session.id,
            "state": state_value or session.state.value,
            "menus": session.menus.as_dict() if session.menus else None,
            "asset_id": session.asset_id,
            "failure": session.failure,
        }
        with self._registry_lock:
            subs = list(self.subscribers.get(session.id, []))
        for queue, loop in subs:
            loop.call_soon_threadsafe(queue.put_nowait, msg)

    def handle_event(self, session: Session, event: dict) -> dict:
        """Process one event under the session's ordering lock."""
        lock = self.locks[session.id]
        with lock:
            client_id = event.get("client_event_id")
            if client_id:
                seen = self.processed_events[session.id].get(client_id)
                if seen is not None:
                    return seen
            before = len(session.state_history)
            self.pipeline.handle_event(session, event)
            outcome = {"state": session.state.value, "session": session.snapshot()}
            if client_id:
                self.processed_events[session.id][client_id] = outcome
        # push every state the event traversed: Thinking -> Offers (or
        # Baking -> Presenting) happens inside a single POST and the status
        # board wants each step
        for st in session.state_history[before:]:
            self.publish(session, state_value=st.value)
        return outcome


def create_app(
    repo: AssetRepository | None = None,
    pipeline: Pipeline | None = None,
    config: ApiConfig | None = None,
    backends: Backends | None = None,
) -> FastAPI:
    config = config or ApiConfig()
    if pipeline is None:
        if repo is None:
            repo = AssetRepository(config.repo_path)
        pipeline = Pipeline(
            repo,
            backends=backends,
            config=PipelineConfig(simplify_target=config.simplify_target),
        )
    state = GatewayState(pipeline)
    app = FastAPI(title="meshforge gateway", version="1")
    app.state.gateway = state
    app.state.config = config

    @app.middleware("http")
    async def auth_middleware(request: Request, call_next):
        token = config.auth_token
        if token and request.url.path.startswith("/v1"):
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return _error("unauthorized", "missing or wrong bearer token", 401)
        return await call_next(request)

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: dict | None = None):
        language = (body or {}).get("language", "en")
        s = state.create_session(language)
        return {"id": s.id, "state": s.state.value, "language": s.language}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        s = state.get(session_id)
        if s is None:
            return _error("not_found", f"no session {session_id}", 404)
        return s.snapshot()

    @app.post("/v1/sessions/{session_id}/events")
    def post_event(session_id: str, body: dict):
        s = state.get(session_id)
        if s is None:
            return _error("not_found", f"no session {session_id}", 404)
        if "type" not in body:
            return _error("bad_request", "event body needs a 'type'", 400)
        try:
            return state.handle_event(s, body)
        except TransitionError as exc:
            return _error("illegal_transition", str(exc), 409)
        except BackendError as exc:
            return _error("backend_failure", str(exc), 502)
        except (ValueError, KeyError) as exc:
            return _error("bad_request", str(exc), 400)

    @app.get("/v1/sessions/{session_id}/menus")
    def get_menus(session_id: str):
        s = state.get(session_id)
        if s is None:
            return _error("not_found", f"no session {session_id}", 404)
        if s.menus is None:
            return _error("no_menus", "menus not assembled yet", 409)
        return s.menus.as_dict()

    @app.get("/v1/sessions/{session_id}/stream")
    async def stream(session_id: str, request: Request):
        s = state.get(session_id)
        if s is None:
            return _error("not_found", f"no session {session_id}", 404)
        queue: asyncio.Queue = asyncio.Queue()
        loop = asyncio.get_running_loop()
        state.subscribe(session_id, queue, loop)

        async def events():
            try:
                # replay current state so subscribers never start blind
                snapshot = {
                    "session_id": s.id,
                    "state": s.state.value,
                    "menus": s.menus.as_dict() if s.menus else None,
                    "asset_id": s.asset_id,
                    "failure": s.failure,
                }
                yield f"data: {json.dumps(snapshot)}\n\n"
                while not await request.is_disconnected():
                    try:
                        msg = await asyncio.wait_for(queue.get(), timeout=0.5)
                    except asyncio.TimeoutError:
                        yield ": keep-alive\n\n"
                        continue
                    yield f"data: {json.dumps(msg)}\n\n"
            finally:
                state.unsubscribe(session_id, queue)

        return StreamingResponse(events(), media_type="text/event-stream")

    @app.get("/v1/assets/{asset_id}")
    def get_asset(asset_id: str, format: str = "binary"):
        try:
            record = pipeline.repo.get(asset_id)
        except KeyError:
            return _error("not_found", f"no asset {asset_id}", 404)
        mesh = pipeline.repo.load_mesh(record)
        if format == "binary":
            data = write_mesh(mesh, "compact-binary")
            return Response(
                content=data,
                media_type="application/octet-stream",
                headers={
                    "Content-Disposition": f'attachment; filename="{asset_id}{BINARY_EXTENSION}"'
                },
            )
        if format in ("obj", "text", "text-obj"):
            return Response(
                content=write_mesh(mesh, "text-obj"), media_type="text/plain"
            )
        return _error("bad_request", f"unknown format {format!r}", 400)

    @app.get("/v1/metrics/report")
    def metrics_report():
        return report_metrics(list(state.sessions.values()), pipeline.repo)

    console = config.console_dir
    if console and Path(console).is_dir():
        app.mount("/", StaticFiles(directory=console, html=True), name="console")

    return app
