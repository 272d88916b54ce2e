"""Long-running answer service: HTTP POST /answer {"question": ...}.

A thin stdlib wrapper around an immutable Pipeline; requests are
handled on independent threads, which is safe because the pipeline
holds no per-request state.
"""

from __future__ import annotations

import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .pipeline import Pipeline


def make_server(pipeline: Pipeline, host: str = "127.0.0.1", port: int = 8080) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def _send(self, status: int, payload: dict):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/health":
                self._send(200, {"status": "ok", "index_size": len(pipeline.index)})
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self):
            if self.path != "/answer":
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"{}")
                question = payload.get("question")
                if not isinstance(question, str) or not question.strip():
                    self._send(400, {"error": "body must be JSON with a non-empty 'question'"})
                    return
                response = pipeline.answer(question)
                self._send(200, response.to_dict())
            except Exception as exc:  # noqa: BLE001 - service boundary
                self._send(500, {"error": str(exc)})

        def log_message(self, fmt, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)
