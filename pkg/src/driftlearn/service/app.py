"""FastAPI application exposing sessions, runs, ablations, and datasets.

A session wraps one OnlineLearner so a remote caller can drive the
predict-then-train loop over the wire; runs execute a whole seeded
configuration server-side. State is in-memory and per-process.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import asdict

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import JSONResponse

from .. import __version__
from ..api import build_learner, execute_run, generate_dataset, run_ablations
from ..config import RunConfig, from_mapping
from ..errors import ConfigError, DimensionError, DriftlearnError, InputError
from .schemas import (
    BatchMetrics,
    DatasetRequest,
    DatasetResponse,
    HealthResponse,
    PredictRequest,
    PredictResponse,
    RunRequest,
    RunStatus,
    SessionCreateRequest,
    SessionInfo,
    SessionList,
    TrainRequest,
)


class _Session:
    def __init__(self, seed: int, cfg: RunConfig):
        self.seed = seed
        self.features = cfg.synthetic_features
        self.learner = build_learner(cfg, self.features, seed)

    def info(self, session_id: str) -> SessionInfo:
        net = self.learner.net
        return SessionInfo(
            session_id=session_id,
            seed=self.seed,
            features=self.features,
            n_classes=net.n_classes,
            depth=net.depth,
            width=net.last_width,
            batches_seen=self.learner.batch_counter,
        )


def _config_from(payload: dict) -> RunConfig:
    return from_mapping({**RunConfig().to_mapping(), **payload})


def create_app() -> FastAPI:
    app = FastAPI(title="driftlearn", version=__version__)
    sessions: dict[str, _Session] = {}
    runs: dict[str, dict] = {}
    lock = threading.Lock()

    @app.exception_handler(ConfigError)
    async def _config_error(_, exc: ConfigError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(DimensionError)
    async def _dimension_error(_, exc: DimensionError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(InputError)
    async def _input_error(_, exc: InputError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(DriftlearnError)
    async def _library_error(_, exc: DriftlearnError):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", version=__version__)

    # ------------------------------------------------------------ sessions

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(req: SessionCreateRequest):
        cfg = _config_from(req.config)
        cfg.validate()
        session = _Session(req.seed, cfg)
        session_id = uuid.uuid4().hex
        with lock:
            sessions[session_id] = session
        return session.info(session_id)

    @app.get("/sessions", response_model=SessionList)
    def list_sessions():
        with lock:
            items = [s.info(sid) for sid, s in sessions.items()]
        return SessionList(sessions=items)

    def _session(session_id: str) -> _Session:
        with lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def get_session(session_id: str):
        return _session(session_id).info(session_id)

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        with lock:
            if sessions.pop(session_id, None) is None:
                raise HTTPException(status_code=404, detail="unknown session")

    @app.post("/sessions/{session_id}/predict", response_model=PredictResponse)
    def predict(session_id: str, req: PredictRequest):
        session = _session(session_id)
        sensors = None if req.sensors is None else np.asarray(req.sensors)
        images = None if req.images is None else np.asarray(req.images)
        probs, preds = session.learner.predict_batch(sensors, images)
        return PredictResponse(
            probabilities=probs.tolist(), predictions=preds.tolist()
        )

    @app.post("/sessions/{session_id}/train", response_model=BatchMetrics)
    def train(session_id: str, req: TrainRequest):
        session = _session(session_id)
        record = session.learner.observe_labels(np.asarray(req.labels))
        return BatchMetrics(**asdict(record))

    @app.get("/sessions/{session_id}/checkpoint")
    def checkpoint(session_id: str):
        session = _session(session_id)
        return {
            "hash": session.learner.checkpoint_hash(),
            "state": session.learner.net.to_state(),
        }

    # ------------------------------------------------------------ runs

    def _execute(run_id: str, kind: str, cfg: RunConfig, toggles):
        try:
            if kind == "run":
                summary = execute_run(cfg, tuple(toggles))
                payload = {"status": "done", "summary": summary}
            else:
                report = run_ablations(cfg, tuple(toggles))
                payload = {"status": "done", "report": report}
        except DriftlearnError as exc:
            payload = {"status": "failed", "error": str(exc)}
        with lock:
            runs[run_id].update(payload)

    def _start(kind: str, req: RunRequest, wait: bool) -> RunStatus:
        cfg = _config_from(req.config)
        cfg.validate()
        run_id = uuid.uuid4().hex
        with lock:
            runs[run_id] = {"status": "running"}
        if wait:
            _execute(run_id, kind, cfg, req.toggles)
        else:
            worker = threading.Thread(
                target=_execute, args=(run_id, kind, cfg, req.toggles), daemon=True
            )
            worker.start()
        with lock:
            entry = dict(runs[run_id])
        return RunStatus(run_id=run_id, **entry)

    @app.post("/runs", response_model=RunStatus)
    def start_run(req: RunRequest, wait: bool = Query(default=False)):
        return _start("run", req, wait)

    @app.post("/ablations", response_model=RunStatus)
    def start_ablation(req: RunRequest, wait: bool = Query(default=False)):
        return _start("ablate", req, wait)

    @app.get("/runs/{run_id}", response_model=RunStatus)
    def run_status(run_id: str):
        with lock:
            entry = runs.get(run_id)
        if entry is None:
            raise HTTPException(status_code=404, detail="unknown run")
        return RunStatus(run_id=run_id, **entry)

    # ------------------------------------------------------------ datasets

    @app.post("/datasets/synthetic", response_model=DatasetResponse)
    def synthetic_dataset(req: DatasetRequest):
        cfg = _config_from(req.config)
        rows = generate_dataset(cfg, req.path)
        return DatasetResponse(path=req.path, rows=rows)

    return app


app = create_app()
