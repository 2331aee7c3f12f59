"""HTTP/JSON surface over the session manager.

Thin endpoint layer: request parsing and status-code mapping only — all
session logic lives in :mod:`stereoacuity.sessions`.
"""

from __future__ import annotations

import io

from fastapi import FastAPI
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from . import psi
from .geometry import DEFAULT_PROFILE, DisplayProfile
from .sessions import SessionError, SessionManager


class CreateSessionBody(BaseModel):
    paradigm: str
    profile: dict | None = None
    seed: int | None = None


class AgcKeyBody(BaseModel):
    event: str


class StResponseBody(BaseModel):
    trial_no: int
    shape: str


def create_app(
    data_dir,
    default_profile: DisplayProfile = DEFAULT_PROFILE,
    psi_config: psi.PsiConfig | None = None,
) -> FastAPI:
    manager = SessionManager(data_dir, default_profile=default_profile, psi_config=psi_config)
    app = FastAPI(title="stereoacuity", docs_url=None, redoc_url=None)
    app.state.manager = manager

    @app.exception_handler(SessionError)
    async def _session_error(request, exc: SessionError):
        return JSONResponse(status_code=exc.status, content={"detail": str(exc)})

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = manager.create(body.paradigm, body.profile, body.seed)
        reply = {
            "session_id": session.session_id,
            "paradigm": session.paradigm,
            "phase": session.phase,
            "profile": session.profile.to_json(),
        }
        if session.phase == "agc":
            reply["agc"] = session.agc_view()
        return reply

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return manager.get(session_id).record()

    @app.post("/sessions/{session_id}/agc/keys")
    def agc_key(session_id: str, body: AgcKeyBody):
        return manager.get(session_id).agc_key(body.event)

    @app.post("/sessions/{session_id}/agc/commit")
    def agc_commit(session_id: str):
        return manager.get(session_id).agc_commit()

    @app.get("/sessions/{session_id}/st/current")
    def st_current(session_id: str):
        return manager.get(session_id).st_current()

    @app.get("/sessions/{session_id}/st/current.png")
    def st_current_png(session_id: str):
        """Debug view: the pending stimulus rasterized server-side."""
        from PIL import Image

        from . import rds

        session = manager.get(session_id)
        session.st_current()
        pending = session.pending
        stimulus = rds.generate_rds(
            session.rds_config, pending.o1_px, pending.shape_true, pending.stim_seed
        )
        img = rds.rasterize(stimulus, session.gamma_table)
        buf = io.BytesIO()
        Image.fromarray(img).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/sessions/{session_id}/st/response")
    def st_response(session_id: str, body: StResponseBody):
        return manager.get(session_id).st_respond(body.trial_no, body.shape)

    @app.get("/sessions/{session_id}/result")
    def result(session_id: str):
        return manager.get(session_id).result_view()

    return app
