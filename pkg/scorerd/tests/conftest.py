"""Fixtures: live sidecars and deliberately broken protocol endpoints."""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from scorerd import ScorerModelConfig, serve_scorer


@pytest.fixture
def sidecar_factory():
    running = []

    def make(model_id="neg-length", **cfg_kwargs):
        svc = serve_scorer(ScorerModelConfig(model_id=model_id, **cfg_kwargs))
        running.append(svc)
        return svc

    yield make
    for svc in running:
        svc.close()


class BrokenEndpoint:
    """Protocol lookalike with a selectable defect for conformance tests."""

    def __init__(self, defect: str):
        self.defect = defect
        self.calls = 0
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _BrokenHandler)
        self.server.broken = self  # type: ignore[attr-defined]
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def address(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)


class _BrokenHandler(BaseHTTPRequestHandler):
    def _send(self, status, payload):
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        broken = self.server.broken  # type: ignore[attr-defined]
        if self.path != "/healthz":
            self._send(404, {"error": "no route"})
        elif broken.defect == "bad-health":
            self._send(200, {"alive": True})
        else:
            self._send(200, {"status": "ok", "model": "broken-stub"})

    def do_POST(self):
        broken = self.server.broken  # type: ignore[attr-defined]
        broken.calls += 1
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            req = json.loads(raw)
            cands = req["candidates"]
        except (ValueError, KeyError):
            if broken.defect == "error-500":
                self._send(500, {"boom": 1})
            else:
                self._send(400, {"error": "bad request"})
            return
        scores = [-float(len(c["text"])) for c in cands]
        if broken.defect == "reversed":
            scores = list(reversed(scores))
        elif broken.defect == "drop-one" and scores:
            scores = scores[:-1]
        elif broken.defect == "nondeterministic":
            scores = [s + broken.calls for s in scores]
        self._send(200, {"scores": scores})

    def log_message(self, *args):
        pass


@pytest.fixture
def broken_endpoint_factory():
    servers = []

    def make(defect: str) -> BrokenEndpoint:
        server = BrokenEndpoint(defect)
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.close()
