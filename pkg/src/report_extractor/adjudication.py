"""HTTP service for the blinded conflict-resolution workflow.

Every payload leaving this service is built from
``Conflict.presentation_view``, so annotator identities never reach the
adjudicator. Resolutions are guarded by per-conflict version numbers
(optimistic concurrency: a stale submit gets 409 and must refetch) and are
appended to a JSON-lines log as they are accepted.

The optional assistant endpoint is a plain pass-through to a chat model; the
proxied prompt carries the report, the feature, and both candidates, but no
source information, keeping the assistant equally blinded.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any

from . import client as llm
from .goldstandard import (
    DECISION_A,
    DECISION_B,
    DECISION_OTHER,
    Conflict,
    Resolution,
    save_resolutions,
    values_agree,
)
from .schema import ExtractionSchema

log = logging.getLogger(__name__)

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
}


@dataclass
class AdjudicationState:
    queue: list[Conflict]
    report_texts: dict[str, str]
    schema: ExtractionSchema | None = None
    resolutions_path: str | None = None
    assist_endpoint: llm.EndpointConfig | None = None
    resolutions: dict[str, Resolution] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)
    done_event: threading.Event = field(default_factory=threading.Event)

    def _conflict(self, conflict_id: str) -> Conflict | None:
        return next((c for c in self.queue if c.conflict_id == conflict_id), None)

    def progress(self) -> dict[str, int]:
        resolved = len(self.resolutions)
        return {"resolved": resolved, "total": len(self.queue)}

    def decision_summary(self) -> dict[str, int]:
        summary = {DECISION_A: 0, DECISION_B: 0, DECISION_OTHER: 0, "ocr_flags": 0}
        for resolution in self.resolutions.values():
            summary[resolution.decision] += 1
            if resolution.ocr_error_flag:
                summary["ocr_flags"] += 1
        return summary

    def next_item(self) -> dict[str, Any]:
        with self.lock:
            pending = next(
                (c for c in self.queue if c.conflict_id not in self.resolutions), None
            )
            if pending is None:
                self.done_event.set()
                return {
                    "done": True,
                    "progress": self.progress(),
                    "summary": self.decision_summary(),
                }
            view = pending.presentation_view()
            if self.schema is not None and pending.feature_name in self.schema:
                view["feature_description"] = self.schema[pending.feature_name].description
                spec = self.schema[pending.feature_name]
                view["allowed_codes"] = list(spec.codes) if spec.allowed_codes else None
            else:
                view["feature_description"] = ""
                view["allowed_codes"] = None
            return {"done": False, "item": view, "progress": self.progress()}

    def resolve(self, payload: dict[str, Any]) -> tuple[int, dict[str, Any]]:
        conflict_id = payload.get("conflict_id")
        decision = payload.get("decision")
        if decision not in (DECISION_A, DECISION_B, DECISION_OTHER):
            return 400, {"error": f"unknown decision {decision!r}"}
        with self.lock:
            conflict = self._conflict(conflict_id)
            if conflict is None:
                return 400, {"error": f"unknown conflict {conflict_id!r}"}
            version = payload.get("version")
            if version != conflict.version:
                return 409, {
                    "error": "stale_version",
                    "conflict_id": conflict_id,
                    "version": conflict.version,
                }
            other_value = payload.get("other_value")
            if decision == DECISION_OTHER:
                if values_agree(other_value, conflict.candidate_a) or values_agree(
                    other_value, conflict.candidate_b
                ):
                    return 400, {
                        "error": "other_value must differ from both candidates"
                    }
            resolution = Resolution(
                conflict_id=conflict_id,
                decision=decision,
                other_value=other_value if decision == DECISION_OTHER else None,
                ocr_error_flag=bool(payload.get("ocr_error_flag", False)),
                decided_at=payload.get("decided_at", ""),
            )
            if conflict_id in self.resolutions:
                log.info("conflict %s re-resolved; overwriting previous decision", conflict_id)
            self.resolutions[conflict_id] = resolution
            conflict.version += 1
            if self.resolutions_path:
                save_resolutions([resolution], self.resolutions_path)
            # done_event fires from next_item() so the adjudicator's final
            # /queue/next poll (the completion screen) is served before the
            # CLI tears the server down
            return 200, {
                "accepted": True,
                "conflict_id": conflict_id,
                "version": conflict.version,
                "progress": self.progress(),
            }

    def assist(self, payload: dict[str, Any]) -> tuple[int, dict[str, Any]]:
        if self.assist_endpoint is None:
            return 404, {"error": "assistant_disabled"}
        conflict = self._conflict(payload.get("conflict_id"))
        if conflict is None:
            return 400, {"error": "unknown conflict"}
        question = payload.get("question", "")
        report_text = self.report_texts.get(conflict.report_id, "")
        messages = [
            {
                "role": "system",
                "content": (
                    "You help review conflicting values proposed for a feature of a "
                    "text report. You are not told where either candidate came from."
                ),
            },
            {
                "role": "user",
                "content": (
                    f"Feature: {conflict.feature_name}\n"
                    f"Candidate A: {json.dumps(conflict.candidate_a)}\n"
                    f"Candidate B: {json.dumps(conflict.candidate_b)}\n\n"
                    f"Report:\n{report_text}\n\n"
                    f"Question: {question}"
                ),
            },
        ]
        try:
            reply, _usage = llm.chat_completion(self.assist_endpoint, messages)
        except (llm.TransportError, llm.ApiError) as exc:
            return 502, {"error": f"assistant unavailable: {exc}"}
        return 200, {"reply": reply}


class _Handler(BaseHTTPRequestHandler):
    state: AdjudicationState
    ui_dir: Path | None

    def log_message(self, fmt, *args):
        pass

    def _send_json(self, status: int, payload: dict[str, Any]) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_text(self, status: int, text: str, content_type="text/plain; charset=utf-8"):
        body = text.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _serve_static(self, path: str) -> None:
        if self.ui_dir is None:
            self._send_text(
                200,
                "adjudication API: GET /queue/next, GET /reports/<id>/text, "
                "POST /resolutions, GET /progress, POST /assist",
            )
            return
        relative = path.lstrip("/") or "index.html"
        target = (self.ui_dir / relative).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            self._send_json(404, {"error": "not found"})
            return
        content_type = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        body = target.read_bytes()
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        if path == "/queue/next":
            self._send_json(200, self.state.next_item())
            return
        if path == "/progress":
            self._send_json(200, self.state.progress())
            return
        if path.startswith("/reports/") and path.endswith("/text"):
            report_id = path[len("/reports/") : -len("/text")]
            text = self.state.report_texts.get(report_id)
            if text is None:
                self._send_json(404, {"error": "unknown report"})
                return
            self._send_text(200, text)
            return
        self._serve_static(path)

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length) or b"{}")
        except ValueError:
            self._send_json(400, {"error": "request body is not JSON"})
            return
        if path == "/resolutions":
            status, body = self.state.resolve(payload)
        elif path == "/assist":
            status, body = self.state.assist(payload)
        else:
            status, body = 404, {"error": "unknown route"}
        self._send_json(status, body)


@dataclass
class AdjudicationServerHandle:
    server: ThreadingHTTPServer
    thread: threading.Thread
    state: AdjudicationState

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def wait_until_done(self, timeout: float | None = None) -> bool:
        return self.state.done_event.wait(timeout)

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def serve_adjudication(
    state: AdjudicationState, port: int = 0, ui_dir: str | None = None
) -> AdjudicationServerHandle:
    handler = type(
        "BoundHandler",
        (_Handler,),
        {"state": state, "ui_dir": Path(ui_dir) if ui_dir else None},
    )
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return AdjudicationServerHandle(server=server, thread=thread, state=state)
