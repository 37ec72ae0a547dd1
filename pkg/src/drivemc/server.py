"""Collection endpoint: serves the scenario runner and appends submitted sessions.

POST bodies are validated with the same machinery as file ingestion; accepted
sessions are appended to one line-delimited file through a single lock, so
concurrent submissions never interleave partial lines.
"""

from __future__ import annotations

import json
import threading
import uuid
from pathlib import Path
from typing import Any, Optional

from fastapi import FastAPI, Request
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles

from .errors import ValidationError
from .types import StudyConfig, load_study_config, trace_from_dict, trace_to_json

_PLACEHOLDER_PAGE = """<!doctype html>
<html>
  <head><meta charset="utf-8"><title>Scenario runner</title></head>
  <body>
    <h1>Scenario collection endpoint</h1>
    <p>The API is up. Build the scenario runner UI (frontend/) and pass its
    dist directory via --static to serve it here.</p>
    <ul>
      <li><code>GET /api/config</code> returns the scenario configuration.</li>
      <li><code>POST /api/sessions</code> accepts a completed session.</li>
    </ul>
  </body>
</html>
"""


class SessionStore:
    """Append-only line-delimited session log behind one writer lock."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, line: str) -> None:
        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()


def build_app(
    config: StudyConfig | None = None,
    sessions_path: Path | str = "sessions.jsonl",
    static_dir: Optional[Path | str] = None,
) -> FastAPI:
    if config is None:
        config = load_study_config()
    store = SessionStore(Path(sessions_path))
    app = FastAPI(title="drivemc collection endpoint")
    app.state.config = config
    app.state.store = store

    @app.get("/api/config")
    def get_config() -> Any:
        return JSONResponse(dict(config.raw))

    @app.post("/api/sessions")
    async def post_session(request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError as exc:
            return JSONResponse(
                {"errors": [{"field": None, "message": f"malformed JSON: {exc.msg}"}]},
                status_code=422,
            )
        if not isinstance(payload, dict):
            return JSONResponse(
                {"errors": [{"field": None, "message": "session body must be an object"}]},
                status_code=422,
            )
        session_id = uuid.uuid4().hex
        profile = payload.get("profile")
        if isinstance(profile, dict) and not profile.get("id"):
            profile = dict(profile)
            profile["id"] = session_id
            payload = dict(payload)
            payload["profile"] = profile
        try:
            trace = trace_from_dict(payload, config)
        except ValidationError as exc:
            return JSONResponse(
                {"errors": [{"field": exc.field, "message": str(exc)}]},
                status_code=422,
            )
        store.append(trace_to_json(trace))
        return JSONResponse({"id": session_id, "participant_id": trace.profile.id}, status_code=201)

    static = Path(static_dir) if static_dir else None
    if static is not None and static.is_dir():
        app.mount("/", StaticFiles(directory=str(static), html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index() -> str:
            return _PLACEHOLDER_PAGE

    return app
