"""FastAPI service wrapping the streaming engine.

Stateless endpoints (/run, /check, /compare) execute a whole request in one
call. Sessions hold a live engine per client so a stream can be stepped
incrementally, snapshotted, and restored — the natural shape for interactive
prompt-switching use. Invariant breaches in checked mode are domain outcomes,
not transport errors: they come back in the response body with ok=False.
"""

from __future__ import annotations

import threading
import uuid

from fastapi import FastAPI, HTTPException

import anchorcache
from anchorcache.check import check_trace
from anchorcache.compare import run_comparison
from anchorcache.engine import Engine, EngineConfig
from anchorcache.errors import (
    CacheEngineError,
    InvariantViolation,
    SchemaError,
    StateError,
    TraceParseError,
)
from anchorcache.memory import CacheConfig
from anchorcache.model import ModelConfig
from anchorcache.recache import Strategy
from anchorcache.rope import RopeConfig, RopeMode
from anchorcache.schedule import PromptSchedule
from anchorcache.service.schemas import (
    BreachInfo,
    CheckRequest,
    CheckResponse,
    CompareRequest,
    CompareResponse,
    EngineSettings,
    HealthResponse,
    RestoreRequest,
    RunRequest,
    RunResponse,
    ScheduleDoc,
    SessionCreateRequest,
    SessionInfo,
    SnapshotResponse,
    StepRequest,
    StepResponse,
)
from anchorcache.trace import build_header, parse_trace


def engine_config(d_model: int, settings: EngineSettings) -> EngineConfig:
    """Assemble the core config from flat service settings plus the schedule's d_model."""
    model = ModelConfig(
        d_model=d_model,
        n_heads=settings.n_heads,
        tokens_per_frame=settings.tokens_per_frame,
        weight_seed=settings.weight_seed,
    )
    return EngineConfig(
        cache=CacheConfig(
            n_sink=settings.sink,
            n_junction=settings.junction,
            window=settings.window,
        ),
        rope=RopeConfig(
            p_max=settings.p_max,
            base=settings.rope_base,
            head_dim=model.head_dim,
        ),
        model=model,
        strategy=Strategy(settings.strategy),
        rope_mode=RopeMode(settings.rope_mode),
        noise_seed=settings.noise_seed,
        checked=settings.checked,
    )


def _load_schedule(doc: ScheduleDoc) -> PromptSchedule:
    return PromptSchedule.from_dict(doc.model_dump())


def _schema_detail(exc: SchemaError) -> list[dict]:
    return [{"loc": exc.path.split(".") if exc.path else [], "msg": exc.message}]


class SessionStore:
    """In-memory engines keyed by id.

    The store lock guards the mapping; each session additionally carries its
    own lock so concurrent step/snapshot requests on one engine are
    serialized (a stream is strictly sequential).
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._sessions: dict[str, tuple[Engine, threading.Lock]] = {}

    def add(self, engine: Engine) -> str:
        session_id = uuid.uuid4().hex
        with self._lock:
            self._sessions[session_id] = (engine, threading.Lock())
        return session_id

    def get(self, session_id: str) -> tuple[Engine, threading.Lock]:
        with self._lock:
            item = self._sessions.get(session_id)
        if item is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return item

    def remove(self, session_id: str) -> None:
        with self._lock:
            if session_id not in self._sessions:
                raise HTTPException(status_code=404, detail=f"no session {session_id}")
            del self._sessions[session_id]


def create_app() -> FastAPI:
    app = FastAPI(title="anchorcache", version=anchorcache.__version__)
    sessions = SessionStore()

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=anchorcache.__version__)

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest) -> RunResponse:
        try:
            sched = _load_schedule(req.schedule)
            config = engine_config(req.schedule.d_model, req.settings)
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=_schema_detail(exc))
        except CacheEngineError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        header = build_header(sched, config)
        try:
            traces = Engine(sched, config).run()
        except InvariantViolation as exc:
            return RunResponse(
                ok=False,
                header=header,
                breach=BreachInfo(invariant=exc.invariant, frame=exc.frame, detail=exc.detail),
            )
        return RunResponse(ok=True, header=header, frames=[t.to_dict() for t in traces])

    @app.post("/check", response_model=CheckResponse)
    def check(req: CheckRequest) -> CheckResponse:
        try:
            header, frames = parse_trace(req.jsonl)
            report = check_trace(header, frames)
        except TraceParseError as exc:
            raise HTTPException(
                status_code=400,
                detail={"error": "parse", "line": exc.line_no, "message": exc.message},
            )
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=_schema_detail(exc))
        doc = report.to_dict()
        return CheckResponse(passed=doc["passed"], checks=doc["checks"])

    @app.post("/compare", response_model=CompareResponse)
    def compare(req: CompareRequest) -> CompareResponse:
        try:
            sched = _load_schedule(req.schedule)
            config = engine_config(req.schedule.d_model, req.settings)
            report = run_comparison(
                sched,
                config,
                tuple(Strategy(s) for s in req.strategies),
                tuple(req.probe_offsets),
            )
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=_schema_detail(exc))
        except CacheEngineError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return CompareResponse(report=report.to_dict())

    @app.post("/sessions", response_model=SessionInfo)
    def create_session(req: SessionCreateRequest) -> SessionInfo:
        try:
            sched = _load_schedule(req.schedule)
            config = engine_config(req.schedule.d_model, req.settings)
            engine = Engine(sched, config)
        except SchemaError as exc:
            raise HTTPException(status_code=422, detail=_schema_detail(exc))
        except CacheEngineError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = sessions.add(engine)
        return _session_info(session_id, engine)

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def session_info(session_id: str) -> SessionInfo:
        engine, _ = sessions.get(session_id)
        return _session_info(session_id, engine)

    @app.post("/sessions/{session_id}/step", response_model=StepResponse)
    def step_session(session_id: str, req: StepRequest) -> StepResponse:
        engine, lock = sessions.get(session_id)
        frames = []
        breach = None
        with lock:
            try:
                for _ in range(req.steps):
                    if engine.done:
                        break
                    frames.append(engine.step().to_dict())
            except InvariantViolation as exc:
                breach = BreachInfo(
                    invariant=exc.invariant, frame=exc.frame, detail=exc.detail
                )
            except StateError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            return StepResponse(frames=frames, t=engine.t, done=engine.done, breach=breach)

    @app.get("/sessions/{session_id}/snapshot", response_model=SnapshotResponse)
    def snapshot_session(session_id: str) -> SnapshotResponse:
        engine, lock = sessions.get(session_id)
        with lock:
            return SnapshotResponse(snapshot=engine.snapshot())

    @app.post("/sessions/restore", response_model=SessionInfo)
    def restore_session(req: RestoreRequest) -> SessionInfo:
        try:
            engine = Engine.restore(req.snapshot)
        except (KeyError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=f"bad snapshot: {exc}")
        except CacheEngineError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        session_id = sessions.add(engine)
        return _session_info(session_id, engine)

    @app.delete("/sessions/{session_id}")
    def delete_session(session_id: str) -> dict:
        sessions.remove(session_id)
        return {"deleted": session_id}

    def _session_info(session_id: str, engine: Engine) -> SessionInfo:
        return SessionInfo(
            session_id=session_id,
            t=engine.t,
            total_frames=engine.schedule.total_frames,
            done=engine.done,
        )

    return app


app = create_app()
