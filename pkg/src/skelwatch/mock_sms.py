"""In-process mock of the Twilio-style SMS endpoint for tests and demos.

Records every request (monotonic timestamp, path, headers, raw body, parsed
form) and answers from a script of statuses: integers become HTTP responses,
the string ``"timeout"`` stalls past the client timeout. An exhausted or
empty script answers 201.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional, Union
from urllib.parse import parse_qsl

__all__ = ["RecordedRequest", "MockSmsServer"]


@dataclass(frozen=True)
class RecordedRequest:
    timestamp: float
    path: str
    headers: dict
    raw_body: bytes
    form: dict


class _Handler(BaseHTTPRequestHandler):
    server_version = "MockSms/1.0"

    def do_POST(self):
        mock: "MockSmsServer" = self.server.mock  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        form = dict(parse_qsl(raw.decode("utf-8"), keep_blank_values=True))
        with mock._lock:
            mock.requests.append(
                RecordedRequest(
                    timestamp=time.perf_counter(),
                    path=self.path,
                    headers={k: v for k, v in self.headers.items()},
                    raw_body=raw,
                    form=form,
                )
            )
            action: Union[int, str] = mock._script.pop(0) if mock._script else 201
            counter = len(mock.requests)
        if action == "timeout":
            time.sleep(mock.stall_seconds)
            action = 201
        if action == 201:
            body = json.dumps({"sid": f"SM{counter:032d}", "status": "queued"})
            self._respond(201, body)
        else:
            status = int(action)
            body = json.dumps({"code": status, "message": f"mock scripted {status}"})
            self._respond(status, body)

    def _respond(self, status: int, body: str) -> None:
        data = body.encode("utf-8")
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)
        except (BrokenPipeError, ConnectionResetError):
            pass  # client gave up (timeout script) — already recorded

    def log_message(self, fmt, *args):  # keep test output quiet
        pass


class MockSmsServer:
    """Context-managed local HTTP server; ``base_url`` plugs into GatewayConfig."""

    def __init__(self, script: Optional[list] = None, stall_seconds: float = 1.0):
        self._script: list = list(script or [])
        self.stall_seconds = stall_seconds
        self.requests: list[RecordedRequest] = []
        self._lock = threading.Lock()
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
        self._server.mock = self  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def script_responses(self, script: list) -> None:
        with self._lock:
            self._script = list(script)

    def start(self) -> "MockSmsServer":
        self._thread = threading.Thread(
            target=self._server.serve_forever, name="mock-sms", daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        if self._thread is not None:
            self._thread.join()
        self._server.server_close()

    def __enter__(self) -> "MockSmsServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
