"""HTTP operator console backend.

Sessions are in-memory: one mission per session, driven by the same
calls the CLI makes. The mission itself runs on a worker thread once
the operator releases it; progress streams out as server-sent events
with monotonically increasing ids, so a client that reconnects with
Last-Event-ID picks up exactly where it dropped.

Reports are serialized with the shared mission serializer, byte for
byte the same document the CLI writes.
"""

from __future__ import annotations

import io
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response, StreamingResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel

from .config import merge_config
from .errors import InvalidStateError, NotFoundError, PollinationError
from .mission import COMPLETE, OPERATOR_REVIEW, Mission, MissionParams, dump_report
from .orchard import SceneConfig, generate_scene, save_depth_png, save_mask_png

_SSE_POLL_S = 0.02

FRAME_KINDS = ("rgb", "depth", "mask", "overlay")


class CreateSession(BaseModel):
    scene_seed: int = 14
    n_clusters: int = 16
    seed: int = 7
    mission: Optional[dict] = None  # recursive MissionParams overrides


class ReviewBody(BaseModel):
    approve: bool
    note: Optional[str] = None


@dataclass
class _Session:
    session_id: str
    mission: Mission
    lock: threading.Lock = field(default_factory=threading.Lock)
    thread: Optional[threading.Thread] = None
    error: Optional[dict] = None

    @property
    def started(self) -> bool:
        return self.thread is not None

    @property
    def finished(self) -> bool:
        return self.mission.phase == COMPLETE or self.error is not None


def _session_summary(s: _Session) -> dict:
    return {"session_id": s.session_id,
            "phase": s.mission.phase,
            "scene": {"n_clusters": len(s.mission.scene.clusters),
                      "n_flowers": s.mission.flower_count}}


def _targets_payload(s: _Session) -> dict:
    targets = s.mission.targets or []
    return {"phase": s.mission.phase,
            "targets": [t.to_dict() for t in targets]}


def _overlay_png(frame) -> np.ndarray:
    """RGB with detected regions tinted by cluster id, for eyeballing."""
    rgb = frame.rgb.astype(np.float64).copy()
    for cid in np.unique(frame.mask):
        if cid == 0:
            continue
        tint = np.array([(53 * cid) % 200 + 55, (97 * cid) % 200 + 55,
                         (173 * cid) % 200 + 55], dtype=np.float64)
        sel = frame.mask == cid
        rgb[sel] = 0.55 * rgb[sel] + 0.45 * tint
    return rgb.astype(np.uint8)


def create_app(ui_dir=None) -> FastAPI:
    app = FastAPI(title="pollination console", docs_url=None, redoc_url=None)
    sessions: dict = {}
    counter = {"n": 0}
    registry_lock = threading.Lock()

    def get_session(session_id: str) -> _Session:
        try:
            return sessions[session_id]
        except KeyError:
            raise NotFoundError(f"no session {session_id}")

    @app.exception_handler(PollinationError)
    async def _domain_error(request: Request, exc: PollinationError):
        status = 400
        if isinstance(exc, NotFoundError):
            status = 404
        elif isinstance(exc, InvalidStateError):
            status = 409
        return JSONResponse({"code": exc.code, "message": str(exc)},
                            status_code=status)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse({"code": "validation_error", "message": str(exc)},
                            status_code=422)

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSession):
        params = MissionParams()
        if body.mission:
            try:
                params = merge_config(params, body.mission)
            except (ValueError, TypeError) as exc:
                return JSONResponse({"code": "validation_error",
                                     "message": str(exc)}, status_code=422)
        scene = generate_scene(SceneConfig(seed=body.scene_seed,
                                           n_clusters=body.n_clusters))
        with registry_lock:
            counter["n"] += 1
            sid = f"s{counter['n']:04d}"
            sessions[sid] = _Session(sid, Mission(scene, params, seed=body.seed))
        return _session_summary(sessions[sid])

    @app.get("/sessions/{sid}")
    def session_info(sid: str):
        return _session_summary(get_session(sid))

    @app.post("/sessions/{sid}/perceive")
    def perceive(sid: str):
        s = get_session(sid)
        with s.lock:
            s.mission.perceive()
        return _targets_payload(s)

    @app.get("/sessions/{sid}/targets")
    def targets(sid: str):
        return _targets_payload(get_session(sid))

    @app.post("/sessions/{sid}/targets/{cluster_id}/review")
    def review(sid: str, cluster_id: int, body: ReviewBody):
        s = get_session(sid)
        with s.lock:
            target = s.mission.review(cluster_id, body.approve, body.note)
        return target.to_dict()

    @app.post("/sessions/{sid}/mission/start", status_code=202)
    def start(sid: str):
        s = get_session(sid)
        with s.lock:
            if s.started:
                raise InvalidStateError("mission already started")
            if s.mission.phase != OPERATOR_REVIEW:
                raise InvalidStateError(
                    f"mission must be in operator_review, not {s.mission.phase}")

            def worker():
                try:
                    s.mission.close_review_and_run()
                except Exception as exc:  # surfaced to the event stream
                    s.error = {"code": getattr(exc, "code", "mission_failed"),
                               "message": str(exc)}

            s.thread = threading.Thread(target=worker, daemon=True)
            s.thread.start()
        return {"session_id": sid, "started": True}

    @app.get("/sessions/{sid}/mission/events")
    def events(sid: str, request: Request, last_event_id: int = 0):
        s = get_session(sid)
        header = request.headers.get("last-event-id")
        cursor = int(header) if header else last_event_id

        def stream():
            sent = cursor
            while True:
                trace = s.mission.trace
                while sent < len(trace):
                    entry = trace[sent]
                    sent += 1
                    yield (f"id: {sent}\nevent: transition\n"
                           f"data: {json.dumps(entry, sort_keys=True)}\n\n")
                if s.finished:
                    terminal = ("error", s.error) if s.error else \
                        ("complete", {"phase": COMPLETE})
                    yield (f"id: {sent + 1}\nevent: {terminal[0]}\n"
                           f"data: {json.dumps(terminal[1], sort_keys=True)}\n\n")
                    return
                time.sleep(_SSE_POLL_S)

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    @app.get("/sessions/{sid}/report")
    def report(sid: str):
        s = get_session(sid)
        if s.error is not None:
            return JSONResponse(s.error, status_code=500)
        if s.mission.phase != COMPLETE:
            raise InvalidStateError("mission not complete")
        return Response(dump_report(s.mission.report()),
                        media_type="application/json")

    @app.get("/sessions/{sid}/frame")
    def frame(sid: str, kind: str = "rgb"):
        s = get_session(sid)
        if kind not in FRAME_KINDS:
            return JSONResponse(
                {"code": "validation_error",
                 "message": f"kind must be one of {', '.join(FRAME_KINDS)}"},
                status_code=422)
        if s.mission.frame is None:
            raise NotFoundError("no frame yet; run perceive first")
        buf = io.BytesIO()
        fr = s.mission.frame
        if kind == "depth":
            save_depth_png(buf, fr.depth_m)
        elif kind == "mask":
            save_mask_png(buf, fr.mask)
        elif kind == "overlay":
            Image.fromarray(_overlay_png(fr)).save(buf, format="PNG")
        else:
            Image.fromarray(fr.rgb).save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True),
                  name="ui")

    return app


app = create_app()
