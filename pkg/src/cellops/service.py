"""The HTTP/JSON service boundary: sessions, SSE message streaming, station
inspection, knowledge search and audit retrieval.

One service instance owns one shared station. Payload field names match the
domain types, lower_snake_case. Sessions live in memory; the audit log on
disk is the durable record.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse

from .audit import AuditLog
from .cellcalc import set_default_band_table
from .config import InvalidPolicyError, ServiceConfig
from .knowledge import default_knowledge_dir, ingest_directory, retrieve
from .providers import HttpProvider, ScriptedProvider, parse_script
from .session import BusySessionError, NoPendingApprovalError, Session
from .station import StationHost

MAX_KPI_WINDOW_S = 3600.0


class UnknownSessionError(Exception):
    pass


class ServiceRuntime:
    """Everything the endpoints share: station, index, audit, sessions."""

    def __init__(self, config: ServiceConfig, provider_factory=None):
        self.config = config
        set_default_band_table(config.band_table_path)
        snapshot_dir = config.snapshot_dir or str(Path(config.audit_path).parent / "config_snapshots")
        self.host = StationHost(config.station_seed, snapshot_dir=snapshot_dir)
        knowledge_dir = config.knowledge_dir or default_knowledge_dir()
        self.index = ingest_directory(knowledge_dir)
        self.audit = AuditLog(config.audit_path)
        self.policy = config.policy
        if provider_factory is not None:
            self._provider_factory = provider_factory
        elif config.provider.kind == "scripted":
            script_entries = config.provider.script
            self._provider_factory = lambda: ScriptedProvider(parse_script(script_entries))
        else:
            # constructed once so a missing credential fails at startup
            shared = HttpProvider(
                endpoint_url=config.provider.endpoint,
                model_name=config.provider.model,
                api_key_env=config.provider.api_key_env,
                timeout_s=config.provider.timeout_s,
            )
            self._provider_factory = lambda: shared
        self._sessions: dict[str, Session] = {}
        self._seq = 0
        self._lock = threading.Lock()
        self._ticker_stop = threading.Event()
        self._ticker: threading.Thread | None = None

    def create_session(self, overrides: dict | None) -> Session:
        policy = self.policy.merged(overrides)
        with self._lock:
            self._seq += 1
            session_id = f"s{self._seq:04d}"
        session = Session(session_id, self.host, self.index, self.audit, policy, self._provider_factory())
        self._sessions[session_id] = session
        return session

    def get_session(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(session_id) from None

    def start_ticker(self) -> None:
        """Wall-clock KPI ticking for interactive serving; off by default."""
        interval = self.config.auto_tick_interval_s
        if not interval or self._ticker is not None:
            return

        def loop():
            while not self._ticker_stop.wait(interval):
                self.host.tick(ticks=1, dt_s=interval)

        self._ticker = threading.Thread(target=loop, daemon=True)
        self._ticker.start()

    def stop_ticker(self) -> None:
        self._ticker_stop.set()


def _http_error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"error": code, "message": message})


def _sse(kind: str, payload: dict) -> str:
    return f"event: {kind}\ndata: {json.dumps(payload)}\n\n"


def build_app(runtime: ServiceRuntime) -> FastAPI:
    app = FastAPI(title="cellops control API")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.runtime = runtime

    def session_or_404(session_id: str) -> Session:
        try:
            return runtime.get_session(session_id)
        except UnknownSessionError:
            raise _http_error(404, "unknown-session", f"no session {session_id!r}")

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await _json_body(request)
        overrides = body.get("policy") or {}
        try:
            session = runtime.create_session(overrides)
        except InvalidPolicyError as exc:
            raise _http_error(400, "invalid-policy-override", str(exc))
        return {"session_id": session.session_id, "policy": session.policy.to_dict()}

    @app.post("/sessions/{session_id}/message")
    async def post_message(session_id: str, request: Request):
        session = session_or_404(session_id)
        body = await _json_body(request)
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            raise _http_error(400, "empty-message", "body must carry a non-empty 'text'")
        try:
            handle = session.start_turn(text)
        except BusySessionError as exc:
            raise _http_error(409, "busy-session", str(exc))

        def event_stream():
            for kind, payload in handle.stream():
                yield _sse(kind, payload)

        return StreamingResponse(event_stream(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/turns/{turn_id}/approval")
    async def resolve_approval(session_id: str, turn_id: str, request: Request):
        session = session_or_404(session_id)
        body = await _json_body(request)
        decision = body.get("decision")
        if decision not in ("approved", "rejected"):
            raise _http_error(400, "bad-decision", "decision must be 'approved' or 'rejected'")
        try:
            session.resolve_approval(turn_id, decision)
        except NoPendingApprovalError as exc:
            raise _http_error(409, "no-pending-approval", str(exc))
        return {"session_id": session_id, "turn_id": turn_id, "decision": decision}

    @app.get("/sessions/{session_id}/turns/{turn_id}")
    async def get_turn(session_id: str, turn_id: str):
        # polling fallback for clients that cannot hold the SSE stream open
        session = session_or_404(session_id)
        state = session.turn_state(turn_id)
        if state is None:
            raise _http_error(404, "unknown-turn", f"no turn {turn_id!r} in session {session_id}")
        return state.to_dict()

    @app.get("/station")
    async def get_station():
        return runtime.host.snapshot().to_dict()

    @app.get("/station/kpis")
    async def get_kpis(window_s: str = ""):
        try:
            window = float(window_s)
        except ValueError:
            raise _http_error(400, "window-out-of-range", f"window_s must be a number, got {window_s!r}")
        if not 0 < window <= MAX_KPI_WINDOW_S:
            raise _http_error(
                400, "window-out-of-range", f"window_s must lie in (0, {MAX_KPI_WINDOW_S:g}]"
            )
        samples = runtime.host.kpi_window(window)
        return {"samples": [s.to_dict() for s in samples]}

    @app.get("/kb/search")
    async def search_kb(q: str = "", k: str = "3"):
        if not q.strip():
            raise _http_error(400, "empty-query", "q must be a non-empty query string")
        try:
            top_k = int(k)
            if top_k < 1:
                raise ValueError
        except ValueError:
            raise _http_error(400, "bad-k", f"k must be a positive integer, got {k!r}")
        hits = retrieve(runtime.index, q, top_k)
        results = []
        for chunk_id, score in hits:
            chunk = runtime.index.get(chunk_id)
            results.append(
                {
                    "chunk_id": chunk_id,
                    "score": score,
                    "heading_path": chunk.heading_path,
                    "text": chunk.text,
                }
            )
        return {"results": results}

    @app.get("/audit")
    async def get_audit(after: str = "0"):
        # the cursor is a record timestamp; timestamps are strictly increasing
        try:
            cursor = float(after)
        except ValueError:
            raise _http_error(400, "malformed-cursor", f"after must be a timestamp, got {after!r}")
        return {"records": runtime.audit.records_after_ts(cursor)}

    return app


async def _json_body(request: Request) -> dict:
    raw = await request.body()
    if not raw:
        return {}
    try:
        body = json.loads(raw)
    except ValueError:
        raise _http_error(400, "bad-json", "request body must be a JSON object")
    if not isinstance(body, dict):
        raise _http_error(400, "bad-json", "request body must be a JSON object")
    return body


def serve(config: ServiceConfig) -> None:
    import uvicorn

    runtime = ServiceRuntime(config)
    runtime.start_ticker()
    app = build_app(runtime)
    try:
        uvicorn.run(app, host=config.listen_host, port=config.listen_port, log_level="info")
    finally:
        runtime.stop_ticker()
