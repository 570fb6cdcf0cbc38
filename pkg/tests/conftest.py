"""Shared fixtures: toy corpora, stub scorer and chat-completion servers."""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from deepir import Corpus, Document, build_index

from helpers import TOY_UNITS, toy_service


@pytest.fixture
def toy_units():
    return dict(TOY_UNITS)


@pytest.fixture
def toy_index(toy_units):
    return build_index(toy_units)


@pytest.fixture
def toy_corpus():
    c = Corpus()
    for doc_id, text in TOY_UNITS.items():
        c.add(Document(doc_id=doc_id, text=text, title=f"Title {doc_id}"))
    return c


@pytest.fixture
def toy_tools():
    return toy_service(k=2, depth_d=2)


class _StubHTTPServer:
    """Tiny JSON-over-HTTP server for tests; subclass handlers configure it."""

    def __init__(self, handler_cls):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler_cls)
        self.server.stub = self  # type: ignore[attr-defined]
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


class StubScorer(_StubHTTPServer):
    """Implements the scorer wire protocol with a configurable scoring function."""

    def __init__(self, fn=None, model="stub-scorer", sleep=0.0, drop_one=False, raw_body=None):
        self.fn = fn or (lambda query, cands: [0.0] * len(cands))
        self.model = model
        self.sleep = sleep
        self.drop_one = drop_one
        self.raw_body = raw_body
        self.batches: list[list[str]] = []  # candidate ids per request
        super().__init__(_ScorerHandler)


class _ScorerHandler(BaseHTTPRequestHandler):
    def _send_json(self, status, payload):
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        stub = self.server.stub  # type: ignore[attr-defined]
        if self.path == "/healthz":
            self._send_json(200, {"status": "ok", "model": stub.model})
        else:
            self._send_json(404, {"error": "no route"})

    def do_POST(self):
        stub = self.server.stub  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length", 0))
        req = json.loads(self.rfile.read(length))
        if self.path != "/score":
            self._send_json(404, {"error": "no route"})
            return
        if stub.sleep:
            time.sleep(stub.sleep)
        cands = [(c["id"], c["text"]) for c in req["candidates"]]
        stub.batches.append([cid for cid, _ in cands])
        if stub.raw_body is not None:
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(stub.raw_body)))
            self.end_headers()
            self.wfile.write(stub.raw_body)
            return
        scores = list(stub.fn(req["query"], cands))
        if stub.drop_one and scores:
            scores = scores[:-1]
        self._send_json(200, {"scores": scores})

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_scorer_factory():
    servers = []

    def make(**kwargs) -> StubScorer:
        server = StubScorer(**kwargs)
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.close()


class StubChat(_StubHTTPServer):
    """Chat-completions endpoint replaying canned assistant messages in order."""

    def __init__(self, messages, status=200):
        self.canned = list(messages)
        self.status = status
        self.requests: list[dict] = []
        self._pos = 0
        super().__init__(_ChatHandler)


class _ChatHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        stub = self.server.stub  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length", 0))
        req = json.loads(self.rfile.read(length))
        stub.requests.append(req)
        if stub.status != 200:
            body = b"{}"
            self.send_response(stub.status)
        else:
            msg = stub.canned[min(stub._pos, len(stub.canned) - 1)]
            stub._pos += 1
            body = json.dumps({"choices": [{"message": msg}]}).encode()
            self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_chat_factory():
    servers = []

    def make(messages, **kwargs) -> StubChat:
        server = StubChat(messages, **kwargs)
        servers.append(server)
        return server

    yield make
    for server in servers:
        server.close()
