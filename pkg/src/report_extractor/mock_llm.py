"""Deterministic OpenAI-compatible HTTP server for end-to-end testing.

The server answers /models and /chat/completions. Answers are looked up by
report fingerprint (SHA-256 of the report text, located inside the user
message by substring search, so the server is independent of how the client
composes its prompts) and by the feature names found in the request's schema
fragment. Faults (malformed JSON, out-of-enum values, HTTP 500, timeouts)
are drawn from a single seeded stream under a lock, so a serialized request
sequence is exactly reproducible.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

FAULT_KINDS = ("malformed_json", "wrong_enum", "http_500", "timeout")

_MALFORMED_CONTENT = '{"this is": not valid json'


def fingerprint(report_text: str) -> str:
    return hashlib.sha256(report_text.encode("utf-8")).hexdigest()


@dataclass
class MockBehavior:
    model_id: str = "mock-model"
    reports: dict[str, str] = field(default_factory=dict)  # fingerprint -> text
    answer_book: dict[tuple[str, str], Any] = field(default_factory=dict)
    fault_rate: float = 0.0
    fault_kinds: tuple[str, ...] = ()
    seed: int = 0
    latency_ms: int = 0
    timeout_sleep_s: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.fault_rate <= 1.0:
            raise ValueError("fault_rate must be in [0, 1]")
        unknown = set(self.fault_kinds) - set(FAULT_KINDS)
        if unknown:
            raise ValueError(f"unknown fault kinds: {sorted(unknown)}")

    def add_report(self, text: str, answers: dict[str, Any]) -> str:
        fp = fingerprint(text)
        self.reports[fp] = text
        for feature, value in answers.items():
            self.answer_book[(fp, feature)] = value
        return fp

    @classmethod
    def from_config(cls, config: dict[str, Any]) -> "MockBehavior":
        behavior = cls(
            model_id=config.get("model_id", "mock-model"),
            fault_rate=config.get("fault_rate", 0.0),
            fault_kinds=tuple(config.get("fault_kinds", ())),
            seed=config.get("seed", 0),
            latency_ms=config.get("latency_ms", 0),
            timeout_sleep_s=config.get("timeout_sleep_s", 2.0),
        )
        for entry in config.get("reports", []):
            behavior.add_report(entry["text"], entry.get("answers", {}))
        return behavior


@dataclass
class LedgerEntry:
    path: str
    model: str
    prompt_tokens: int
    completion_tokens: int
    fault: str | None


def _first_json_object(text: str) -> Any:
    """Parse the first balanced {...} object embedded in free text."""
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    try:
                        return json.loads(text[start : i + 1])
                    except ValueError:
                        break
        start = text.find("{", start + 1)
    return None


def _default_answer(prop: dict[str, Any]) -> Any:
    declared = prop.get("type")
    types = declared if isinstance(declared, list) else [declared]
    if "null" in types:
        return None
    enum = [c for c in prop.get("enum", []) if c is not None]
    if enum:
        return enum[0]
    base = next((t for t in types if t and t != "null"), "string")
    if base == "integer":
        lo = prop.get("minimum", 0)
        return int(lo)
    if base == "number":
        return float(prop.get("minimum", 0))
    if base == "boolean":
        return False
    return "unspecified"


def _corrupt_answer(prop: dict[str, Any]) -> Any:
    declared = prop.get("type")
    types = declared if isinstance(declared, list) else [declared]
    base = next((t for t in types if t and t != "null"), None)
    if base == "string" and "enum" not in prop:
        return 424242  # wrong type for free text
    return "__invalid_code__"


class _MockState:
    def __init__(self, behavior: MockBehavior):
        self.behavior = behavior
        self.ledger: list[LedgerEntry] = []
        self.lock = threading.Lock()
        self.rng = random.Random(behavior.seed)

    def draw_fault(self) -> str | None:
        behavior = self.behavior
        if behavior.fault_rate == 0.0 or not behavior.fault_kinds:
            return None
        with self.lock:
            if self.rng.random() < behavior.fault_rate:
                return self.rng.choice(behavior.fault_kinds)
        return None

    def record(self, entry: LedgerEntry) -> None:
        with self.lock:
            self.ledger.append(entry)


class _Handler(BaseHTTPRequestHandler):
    state: _MockState

    def log_message(self, fmt, *args):  # silence request logging in tests
        pass

    def _send_json(self, status: int, payload: dict[str, Any]) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        if self.path.rstrip("/") == "/models" or self.path.rstrip("/").endswith("/models"):
            self._send_json(
                200,
                {
                    "object": "list",
                    "data": [{"id": self.state.behavior.model_id, "object": "model"}],
                },
            )
            return
        self._send_json(404, {"error": "unknown route"})

    def do_POST(self):
        if not self.path.rstrip("/").endswith("/chat/completions"):
            self._send_json(404, {"error": "unknown route"})
            return
        behavior = self.state.behavior
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            request = json.loads(raw)
        except ValueError:
            self._send_json(400, {"error": "request body is not JSON"})
            return

        if behavior.latency_ms:
            time.sleep(behavior.latency_ms / 1000.0)

        fault = self.state.draw_fault()
        if fault == "timeout":
            self.state.record(
                LedgerEntry(self.path, request.get("model", ""), 0, 0, fault)
            )
            time.sleep(behavior.timeout_sleep_s)
            self._send_json(504, {"error": "simulated timeout"})
            return
        if fault == "http_500":
            self.state.record(
                LedgerEntry(self.path, request.get("model", ""), 0, 0, fault)
            )
            self._send_json(500, {"error": "simulated server error"})
            return

        user_text = "\n".join(
            m.get("content", "")
            for m in request.get("messages", [])
            if m.get("role") == "user"
        )
        fragment = _first_json_object(user_text) or {}
        properties = fragment.get("properties", {})

        report_fp = None
        for fp, text in behavior.reports.items():
            if text and text in user_text:
                report_fp = fp
                break

        answers: dict[str, Any] = {}
        for name, prop in properties.items():
            if report_fp is not None and (report_fp, name) in behavior.answer_book:
                answers[name] = behavior.answer_book[(report_fp, name)]
            else:
                answers[name] = _default_answer(prop if isinstance(prop, dict) else {})

        if fault == "wrong_enum" and properties:
            first = next(iter(properties))
            answers[first] = _corrupt_answer(
                properties[first] if isinstance(properties[first], dict) else {}
            )
            content = json.dumps(answers, ensure_ascii=False)
        elif fault == "malformed_json":
            content = _MALFORMED_CONTENT
        else:
            content = json.dumps(answers, ensure_ascii=False)

        prompt_tokens = max(1, math.ceil(len(raw) / 4))
        completion_tokens = max(1, math.ceil(len(content.encode("utf-8")) / 4))
        self.state.record(
            LedgerEntry(
                self.path,
                request.get("model", ""),
                prompt_tokens,
                completion_tokens,
                fault,
            )
        )
        self._send_json(
            200,
            {
                "id": f"mock-{len(self.state.ledger)}",
                "object": "chat.completion",
                "model": request.get("model", behavior.model_id),
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": content},
                        "finish_reason": "stop",
                    }
                ],
                "usage": {
                    "prompt_tokens": prompt_tokens,
                    "completion_tokens": completion_tokens,
                    "total_tokens": prompt_tokens + completion_tokens,
                },
            },
        )


@dataclass
class MockServerHandle:
    server: ThreadingHTTPServer
    thread: threading.Thread
    state: _MockState

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def ledger(self) -> list[LedgerEntry]:
        return self.state.ledger

    def usage_totals(self) -> tuple[int, int]:
        prompt = sum(e.prompt_tokens for e in self.state.ledger)
        completion = sum(e.completion_tokens for e in self.state.ledger)
        return prompt, completion

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


def serve(behavior: MockBehavior, port: int = 0) -> MockServerHandle:
    """Start the mock endpoint on the given port (0 picks a free one)."""
    state = _MockState(behavior)
    handler = type("BoundHandler", (_Handler,), {"state": state})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return MockServerHandle(server=server, thread=thread, state=state)
